use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tokio::sync::{Mutex, RwLock};
use wiscon_core::detector::ModelCache;
use wiscon_core::Result;

use crate::api::{ErrorBody, ErrorDetail, LabelRequest};
use crate::config::SessionConfig;
use crate::session::{new_session_id, Session, SessionError};
use crate::store::{LabelEntry, Store};

/// Shared server state: live sessions and the optional on-disk store.
#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, Arc<Mutex<Session>>>>>,
    store: Option<Arc<Store>>,
    cache: Option<Arc<ModelCache>>,
}

impl AppState {
    /// In-memory state; sessions are lost on shutdown.
    pub fn new() -> Self {
        Self::default()
    }

    /// In-memory sessions sharing a score cache.
    pub fn with_cache(dir: impl Into<std::path::PathBuf>) -> Result<Self> {
        Ok(Self {
            cache: Some(Arc::new(ModelCache::new(dir)?)),
            ..Self::default()
        })
    }

    /// Opens a store directory and replays every session found in it.
    /// Blocking; call before entering the runtime or from a blocking task.
    pub fn open(dir: impl Into<std::path::PathBuf>) -> Result<Self> {
        let store = Store::open(dir)?;
        let mut sessions = HashMap::new();
        for stored in store.load_all()? {
            let mut session = match Session::build(stored.id.clone(), stored.config, Some(store.cache())) {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("session {}: cannot rebuild: {e}", stored.id);
                    continue;
                }
            };
            for entry in stored.labels {
                let applied = session
                    .check_label(entry.sample_index, &entry.label.into())
                    .and_then(|label| session.apply_label(entry.sample_index, label));
                if let Err(e) = applied {
                    log::warn!("session {}: replay stopped: {e}", stored.id);
                    break;
                }
            }
            log::info!("restored session {} ({:?})", stored.id, session.status());
            sessions.insert(stored.id, Arc::new(Mutex::new(session)));
        }
        Ok(Self {
            sessions: Arc::new(RwLock::new(sessions)),
            store: Some(Arc::new(store)),
            cache: None,
        })
    }

    /// Registers a session built elsewhere, returning its id.
    pub async fn insert(&self, session: Session) -> String {
        let id = session.id().to_string();
        self.sessions.write().await.insert(id.clone(), Arc::new(Mutex::new(session)));
        id
    }

    /// Runs `f` on a session under its lock.
    pub async fn inspect<R>(&self, id: &str, f: impl FnOnce(&Session) -> R) -> Option<R> {
        let session = self.sessions.read().await.get(id).cloned()?;
        let guard = session.lock().await;
        Some(f(&guard))
    }

    pub async fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().await.keys().cloned().collect();
        ids.sort();
        ids
    }

    async fn session(&self, id: &str) -> std::result::Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id:?}")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
        }
    }

    fn bad_json(e: serde_json::Error) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed_json", e.to_string())
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, kind) = match &e {
            SessionError::NotAwaiting(_) => (StatusCode::CONFLICT, "not_awaiting_label"),
            SessionError::IndexMismatch { .. } => (StatusCode::CONFLICT, "index_mismatch"),
            SessionError::NotComplete { .. } => (StatusCode::CONFLICT, "not_complete"),
            SessionError::InvalidLabel(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_label"),
            SessionError::Config(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_config"),
            SessionError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, kind, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                kind: self.kind.to_string(),
                message: self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn json<T: Serialize>(status: StatusCode, body: T) -> Response {
    (status, Json(body)).into_response()
}

/// Parses a body in two steps so that broken JSON (400) is told apart from
/// well-formed JSON of the wrong shape (422).
fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let value: serde_json::Value = serde_json::from_slice(body).map_err(ApiError::bad_json)?;
    serde_json::from_value(value)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", e.to_string()))
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let config: SessionConfig = parse_body(&body)?;
    config.validate().map_err(SessionError::Config)?;
    let id = new_session_id();
    let store = app.store.clone();
    let cache = app.cache.clone();
    let build_id = id.clone();
    let session = tokio::task::spawn_blocking(move || {
        let cache = store.as_deref().map(Store::cache).or(cache.as_deref());
        let session = Session::build(build_id.clone(), config.clone(), cache)?;
        if let Some(store) = &store {
            store.create(&build_id, &config)?;
        }
        Ok::<_, SessionError>(session)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    let created = session.created()?;
    app.sessions.write().await.insert(id.clone(), Arc::new(Mutex::new(session)));
    log::info!("created session {id}");
    Ok(json(StatusCode::CREATED, created))
}

async fn get_query(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = app.session(&id).await?;
    let session = session.lock().await;
    Ok(json(StatusCode::OK, session.query()?))
}

async fn post_label(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let session = app.session(&id).await?;
    let request: LabelRequest = parse_body(&body)?;
    let mut session = session.lock().await;
    let label = session.check_label(request.sample_index, &request.label)?;
    if let Some(store) = &app.store {
        store
            .append_label(
                &id,
                LabelEntry {
                    sample_index: request.sample_index,
                    label,
                },
            )
            .map_err(|e| ApiError::internal(e.to_string()))?;
    }
    Ok(json(StatusCode::OK, session.apply_label(request.sample_index, label)?))
}

async fn get_result(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = app.session(&id).await?;
    let session = session.lock().await;
    Ok(json(StatusCode::OK, session.result()?))
}

async fn get_state(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = app.session(&id).await?;
    let session = session.lock().await;
    Ok(json(StatusCode::OK, session.state()))
}

async fn get_audit(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = app.session(&id).await?;
    let session = session.lock().await;
    let body = session.audit_jsonl()?;
    Ok((StatusCode::OK, [(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn list_sessions(State(app): State<AppState>) -> Response {
    json(StatusCode::OK, serde_json::json!({ "sessions": app.session_ids().await }))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}/query", get(get_query))
        .route("/sessions/{id}/label", post(post_label))
        .route("/sessions/{id}/result", get(get_result))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/audit", get(get_audit))
        .with_state(state)
}

/// Serves the API on `listener` until the task is cancelled.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
