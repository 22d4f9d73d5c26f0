//! JSON-over-HTTP front end for [`EvalService`].

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;

use crate::model::RatingSubmission;
use crate::service::EvalService;
use crate::stats::ScoringMode;
use crate::EvalError;

pub type SharedService = Arc<Mutex<EvalService>>;

impl IntoResponse for EvalError {
    fn into_response(self) -> Response {
        let status = match &self {
            EvalError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            EvalError::Conflict { .. } => StatusCode::CONFLICT,
            EvalError::UnknownRater(_) | EvalError::UnknownTask(_) => StatusCode::NOT_FOUND,
            EvalError::NotAssigned { .. } => StatusCode::FORBIDDEN,
            EvalError::Config(_) | EvalError::NoOverlap => StatusCode::BAD_REQUEST,
            EvalError::Io(_) | EvalError::Format(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Deserialize)]
struct RaterQuery {
    rater: String,
}

#[derive(Deserialize)]
struct ProgressQuery {
    rater: Option<String>,
}

#[derive(Deserialize)]
struct ModeQuery {
    mode: Option<String>,
}

fn lock(state: &SharedService) -> std::sync::MutexGuard<'_, EvalService> {
    // a panic mid-request leaves ratings consistent: the journal is written before the map
    state.lock().unwrap_or_else(|p| p.into_inner())
}

async fn next_task(State(state): State<SharedService>, Query(q): Query<RaterQuery>) -> Result<Response, EvalError> {
    Ok(match lock(&state).next_task(&q.rater)? {
        Some(view) => Json(view).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit(State(state): State<SharedService>, Json(sub): Json<RatingSubmission>) -> Result<Response, EvalError> {
    let rating = lock(&state).submit(sub)?;
    Ok((StatusCode::CREATED, Json(rating)).into_response())
}

async fn aggregate(State(state): State<SharedService>, Query(q): Query<ModeQuery>) -> Result<Response, EvalError> {
    let mode = match q.mode {
        Some(m) => m.parse()?,
        None => ScoringMode::Strict,
    };
    Ok(Json(lock(&state).aggregate(mode)).into_response())
}

async fn agreement(State(state): State<SharedService>) -> Response {
    Json(lock(&state).agreement()).into_response()
}

async fn progress(State(state): State<SharedService>, Query(q): Query<ProgressQuery>) -> Result<Response, EvalError> {
    Ok(Json(lock(&state).progress(q.rater.as_deref())?).into_response())
}

pub fn router(state: SharedService) -> Router {
    Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/ratings", post(submit))
        .route("/api/reports/aggregate", get(aggregate))
        .route("/api/reports/agreement", get(agreement))
        .route("/api/progress", get(progress))
        .with_state(state)
}

/// Serve until the process is stopped.
pub async fn serve(service: EvalService, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("eval service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(Mutex::new(service)))).await
}
