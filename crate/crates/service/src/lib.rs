//! HTTP oracle service: a human (or script) answers the queries of an
//! active-learning session over REST, one label at a time.

pub mod api;
pub mod config;
pub mod http;
pub mod session;
pub mod store;

pub use config::{DatasetSource, SessionConfig};
pub use http::{router, serve, AppState};
pub use session::{new_session_id, Session, SessionError};
pub use store::Store;
