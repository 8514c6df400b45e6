//! JSON routes over [`SessionManager`].

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use super::{SessionError, SessionManager, SessionOptions};
use crate::policies::ActionDto;

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    detail: Option<serde_json::Value>,
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let status = match &e {
            SessionError::UnknownSession(_) => StatusCode::NOT_FOUND,
            SessionError::WrongPhase { .. } | SessionError::NotYourTurn { .. } | SessionError::SessionNotFinished => {
                StatusCode::CONFLICT
            }
            SessionError::InvalidPreset(_)
            | SessionError::OverCommit { .. }
            | SessionError::InvalidScore(_)
            | SessionError::InvalidAction(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SessionError::Engine(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let detail = match &e {
            SessionError::OverCommit { holdings, .. } => Some(json!({ "holdings": holdings })),
            SessionError::NotYourTurn { owner } => Some(json!({ "turn_owner": owner })),
            SessionError::WrongPhase { expected, actual } => Some(json!({ "expected": expected, "actual": actual })),
            _ => None,
        };
        ApiError { status, code: e.code(), message: e.to_string(), detail }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "code": self.code, "message": self.message });
        if let Some(d) = self.detail {
            body["detail"] = d;
        }
        (self.status, Json(json!({ "error": body }))).into_response()
    }
}

fn bad_request(message: String) -> ApiError {
    ApiError { status: StatusCode::UNPROCESSABLE_ENTITY, code: "InvalidRequest", message, detail: None }
}

/// An empty body reads as `{}`.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let text = if body.iter().all(u8::is_ascii_whitespace) { &b"{}"[..] } else { &body[..] };
    serde_json::from_slice(text).map_err(|e| bad_request(format!("invalid request body: {e}")))
}

type Shared = Arc<SessionManager>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TurnBody {
    #[serde(default)]
    utterance: String,
    #[serde(default)]
    actions: Vec<ActionDto>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AllocationBody {
    #[serde(default)]
    outgoing: BTreeMap<String, BTreeMap<String, i64>>,
    rationale: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AffinityBody {
    scores: BTreeMap<String, i64>,
}

/// Runs a blocking session call off the async workers; co-player steps may
/// wait on a model.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, SessionError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::from(SessionError::Engine(format!("worker panicked: {e}"))))?
        .map_err(ApiError::from)
}

async fn create(State(m): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let opts: SessionOptions = parse_body(&body)?;
    let session = blocking(move || m.create_session(&opts)).await?;
    let state = session.state();
    Ok((StatusCode::CREATED, Json(json!({ "session_id": session.id(), "state": *state }))).into_response())
}

async fn state(State(m): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let s = m.get(&id)?;
    Ok(Json(&*s.state()).into_response())
}

async fn turn(State(m): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let b: TurnBody = parse_body(&body)?;
    let s = m.get(&id)?;
    let view = blocking(move || s.submit_turn(&b.utterance, &b.actions)).await?;
    Ok(Json(&*view).into_response())
}

async fn allocation(State(m): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let b: AllocationBody = parse_body(&body)?;
    let s = m.get(&id)?;
    let view = blocking(move || s.submit_allocation(&b.outgoing, b.rationale)).await?;
    Ok(Json(&*view).into_response())
}

async fn affinity(State(m): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let b: AffinityBody = parse_body(&body)?;
    let s = m.get(&id)?;
    let view = blocking(move || s.submit_affinity(&b.scores)).await?;
    Ok(Json(&*view).into_response())
}

async fn result(State(m): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let s = m.get(&id)?;
    Ok(Json(s.result()?).into_response())
}

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/state", get(state))
        .route("/sessions/{id}/turn", post(turn))
        .route("/sessions/{id}/allocation", post(allocation))
        .route("/sessions/{id}/affinity", post(affinity))
        .route("/sessions/{id}/result", get(result))
        .with_state(manager)
}

/// Serves the API on `addr` until the process is stopped, sweeping
/// timed-out sessions once per `sweep_every`.
pub async fn serve(manager: Arc<SessionManager>, addr: SocketAddr, sweep_every: Duration) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "session service listening");
    let sweeper = manager.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(sweep_every);
        loop {
            tick.tick().await;
            let m = sweeper.clone();
            let moved = tokio::task::spawn_blocking(move || m.sweep(Instant::now())).await.unwrap_or(0);
            if moved > 0 {
                tracing::info!(sessions = moved, "applied timeout fallbacks");
            }
        }
    });
    axum::serve(listener, router(manager)).await
}
