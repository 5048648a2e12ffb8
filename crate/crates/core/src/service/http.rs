//! HTTP routes over [`GuidanceService`].
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | POST | `/sessions` | `{"participant_id": "p01", "seed": 7}` | session JSON |
//! | GET | `/sessions/{id}` | | session JSON |
//! | POST | `/sessions/{id}/registration` | fiducial table | registration record (text) |
//! | GET | `/sessions/{id}/trials/{i}/overlay` | | overlay JSON |
//! | POST | `/sessions/{id}/trials/{i}/trace?lift=true` | trace text | metrics JSON |
//! | GET | `/sessions/{id}/trials/{i}/metrics` | | metrics JSON |
//! | POST | `/sessions/{id}/close` | | session JSON |
//! | GET | `/export` | | export JSON |
//! | GET | `/plan` | | plan summary JSON |
//!
//! Errors come back as `{"error": {"kind": ..., "message": ...}}`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::GuidanceService;
use crate::error::Error;

pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::Parse { .. } | Error::InvalidTrace(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Error::Conflict(_) => StatusCode::CONFLICT,
        Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::InvalidArgument(_) | Error::DegenerateConfiguration(_) | Error::Config(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"kind": self.0.kind(), "message": self.0.to_string()}});
        (status_for(&self.0), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = State<Arc<GuidanceService>>;

#[derive(Deserialize)]
struct CreateBody {
    participant_id: String,
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct TraceQuery {
    #[serde(default)]
    lift: bool,
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> crate::Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(Error::InvalidArgument(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

async fn create(State(svc): Shared, Json(body): Json<CreateBody>) -> ApiResult<Response> {
    let s = svc.create_session(&body.participant_id, body.seed)?;
    let view = svc.session_view(&s.session_id)?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn session(State(svc): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(svc.session_view(&id)?).into_response())
}

async fn register(State(svc): Shared, Path(id): Path<String>, body: String) -> ApiResult<String> {
    blocking(move || svc.register(&id, &body)).await
}

async fn overlay(State(svc): Shared, Path((id, trial)): Path<(String, usize)>) -> ApiResult<Response> {
    Ok(Json(svc.overlay(&id, trial)?).into_response())
}

async fn trace(
    State(svc): Shared,
    Path((id, trial)): Path<(String, usize)>,
    Query(q): Query<TraceQuery>,
    body: String,
) -> ApiResult<Response> {
    let m = blocking(move || svc.submit_trace(&id, trial, &body, q.lift)).await?;
    Ok(Json(m).into_response())
}

async fn metrics(State(svc): Shared, Path((id, trial)): Path<(String, usize)>) -> ApiResult<Response> {
    Ok(Json(svc.trial_metrics(&id, trial)?).into_response())
}

async fn close(State(svc): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    svc.close_session(&id)?;
    Ok(Json(svc.session_view(&id)?).into_response())
}

async fn export(State(svc): Shared) -> ApiResult<Response> {
    Ok(Json(blocking(move || svc.export()).await?).into_response())
}

async fn plan(State(svc): Shared) -> Json<serde_json::Value> {
    let p = svc.plan();
    Json(json!({
        "label": svc.plan_label(),
        "target_margin_mm": p.target_margin(),
        "perimeter_mm": p.perimeter(),
        "path_points": p.path().len(),
        "projection": svc.geometry().projection,
    }))
}

pub fn router(service: Arc<GuidanceService>) -> Router {
    Router::new()
        .route("/plan", get(plan))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(session))
        .route("/sessions/{id}/registration", post(register))
        .route("/sessions/{id}/close", post(close))
        .route("/sessions/{id}/trials/{trial}/overlay", get(overlay))
        .route("/sessions/{id}/trials/{trial}/trace", post(trace))
        .route("/sessions/{id}/trials/{trial}/metrics", get(metrics))
        .route("/export", get(export))
        .with_state(service)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, service: Arc<GuidanceService>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(service)).await
}
