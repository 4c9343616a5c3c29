use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mvsearch_core::fusion::ResultList;
use serde::Serialize;
use serde_json::value::RawValue;
use serde_json::json;
use thiserror::Error;

use crate::session::{SessionError, SessionManager, SessionRequest};

const MAX_BODY: usize = 64 << 20;

type AppState = Arc<SessionManager>;

impl IntoResponse for SessionError {
    fn into_response(self) -> Response {
        let status = match self {
            SessionError::BadSpec(_)
            | SessionError::MalformedPayload(_)
            | SessionError::EmptySession(_) => StatusCode::BAD_REQUEST,
            SessionError::UnknownSession(_) | SessionError::UnknownObject(_) => {
                StatusCode::NOT_FOUND
            }
            SessionError::Finalized(_) => StatusCode::CONFLICT,
            SessionError::NoIndex => StatusCode::SERVICE_UNAVAILABLE,
            SessionError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = json!({ "error": self.code(), "message": self.to_string() });
        (status, Json(body)).into_response()
    }
}

#[derive(Serialize)]
struct WireResults<'a> {
    results: Vec<WireEntry<'a>>,
}

#[derive(Serialize)]
struct WireEntry<'a> {
    object_id: &'a str,
    category: &'a str,
    score: Box<RawValue>,
}

/// Formats a score with exactly six decimals.
pub fn score_literal(score: f64) -> String {
    let s = format!("{score:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

fn results_body(results: &ResultList) -> Result<String, SessionError> {
    let results = results
        .iter()
        .map(|e| {
            let score = RawValue::from_string(score_literal(e.score))
                .map_err(|err| SessionError::Internal(err.to_string()))?;
            Ok(WireEntry {
                object_id: &e.object_id,
                category: &e.category,
                score,
            })
        })
        .collect::<Result<Vec<_>, SessionError>>()?;
    serde_json::to_string(&WireResults { results })
        .map_err(|err| SessionError::Internal(err.to_string()))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, SessionError> + Send + 'static,
) -> Result<T, SessionError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| SessionError::Internal(e.to_string()))?
}

async fn create_session(State(mgr): State<AppState>, body: Bytes) -> Result<Response, SessionError> {
    mgr.store()?;
    let request: SessionRequest =
        serde_json::from_slice(&body).map_err(|e| SessionError::BadSpec(e.to_string()))?;
    let id = mgr.create(&request)?;
    Ok(Json(json!({ "session_id": id })).into_response())
}

async fn add_view(
    State(mgr): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, SessionError> {
    let ordinal = blocking(move || mgr.add_view(&id, &body)).await?;
    Ok(Json(json!({ "ordinal": ordinal })).into_response())
}

async fn finalize(State(mgr): State<AppState>, Path(id): Path<String>) -> Result<Response, SessionError> {
    let results = blocking(move || mgr.finalize(&id)).await?;
    let body = results_body(&results)?;
    Ok(([(axum::http::header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn session_status(
    State(mgr): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, SessionError> {
    Ok(Json(mgr.status(&id)?).into_response())
}

async fn object(State(mgr): State<AppState>, Path(id): Path<String>) -> Result<Response, SessionError> {
    let store = mgr.store()?;
    let obj = store
        .object(&id)
        .ok_or_else(|| SessionError::UnknownObject(id.clone()))?;
    let views: Vec<_> = obj
        .views
        .iter()
        .map(|v| json!({ "view_id": v.view_id, "source": v.source }))
        .collect();
    Ok(Json(json!({
        "object_id": obj.object_id,
        "category": obj.category,
        "views": views,
    }))
    .into_response())
}

async fn index_status(State(mgr): State<AppState>) -> Result<Response, SessionError> {
    let store = mgr.store()?;
    Ok(Json(json!({
        "objects": store.objects().len(),
        "views": store.view_count(),
        "vocab_bins": store.bins(),
    }))
    .into_response())
}

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(session_status))
        .route("/v1/sessions/{id}/views", post(add_view))
        .route("/v1/sessions/{id}/finalize", post(finalize))
        .route("/v1/objects/{id}", get(object))
        .route("/v1/index/status", get(index_status))
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(manager)
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Binds `addr` and serves until the process exits. The `ready` callback
/// receives the bound address once the listener is up.
pub async fn serve(
    manager: Arc<SessionManager>,
    addr: SocketAddr,
    ready: impl FnOnce(SocketAddr),
) -> Result<(), ServeError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    ready(listener.local_addr()?);
    axum::serve(listener, router(manager)).await?;
    Ok(())
}
