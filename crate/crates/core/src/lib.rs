//! Contextual anomaly detection with an actively weighted ensemble of
//! contexts.
//!
//! Every bipartition of the features into contextual and behavioral
//! attributes gets its own reference-group detector. A small budget of oracle
//! labels, chosen by an active query strategy, estimates how useful each
//! context is; the final score is the importance-weighted average of the
//! contexts that beat chance.

pub mod active;
pub mod context;
pub mod datagen;
pub mod detector;
pub mod ensemble;
pub mod error;
pub mod eval;
mod linalg;
pub mod model;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = model::Dataset<f64>;
pub type DatasetF32 = model::Dataset<f32>;
pub type ScoreMatrix = model::ScoreMatrix<f64>;
pub type ScoreMatrixF32 = model::ScoreMatrix<f32>;
pub type LabeledPool = model::LabeledPool<f64>;
pub type ContextModel = detector::ContextModel<f64>;
pub type ContextModelF32 = detector::ContextModel<f32>;
pub type ImportanceState = active::ImportanceState<f64>;
pub type ImportanceStateF32 = active::ImportanceState<f32>;
pub type EnsembleResult = ensemble::EnsembleResult<f64>;
pub type EnsembleResultF32 = ensemble::EnsembleResult<f32>;
pub type PcaProjection = context::PcaProjection<f64>;

pub use context::{enumerate_contexts, ContextSet};
pub use model::{Context, ANOMALY, NORMAL};
