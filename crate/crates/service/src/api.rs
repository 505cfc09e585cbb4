use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::manager::{ActionRequest, CreateSession, SessionManager};

type Shared = State<Arc<SessionManager>>;

/// Routes of the v1 API over `manager`.
pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/api/v1/scenarios", get(list_scenarios))
        .route("/api/v1/scenarios/{name}/front", get(front))
        .route("/api/v1/sessions", post(create_session))
        .route("/api/v1/sessions/{id}", get(get_view))
        .route("/api/v1/sessions/{id}/actions", post(apply_action))
        .route("/api/v1/sessions/{id}/report", get(get_report))
        .route("/api/v1/sessions/{id}/trajectory", get(get_trajectory))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not-found", "no such endpoint") })
        .with_state(manager)
}

fn json_body(status: StatusCode, body: String) -> Response {
    (status, [("content-type", "application/json")], body).into_response()
}

fn to_json<T: Serialize>(status: StatusCode, value: &T) -> Response {
    json_body(
        status,
        serde_json::to_string(value).expect("responses always serialise"),
    )
}

fn parse<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

/// Runs blocking manager work (file writes, solving) off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn list_scenarios(State(m): Shared) -> Response {
    to_json(StatusCode::OK, &m.scenarios())
}

#[derive(Debug, Deserialize)]
struct FrontQuery {
    gamma: Option<f64>,
    horizon: Option<u32>,
}

async fn front(
    State(m): Shared,
    Path(name): Path<String>,
    query: Result<Query<FrontQuery>, QueryRejection>,
) -> Response {
    let Ok(Query(q)) = query else {
        return ApiError::bad_request("gamma must be a number and horizon a positive integer").into_response();
    };
    let result = blocking(move || m.front(&name, q.gamma.unwrap_or(1.0), q.horizon.unwrap_or(50))).await;
    match result {
        Ok(summary) => to_json(StatusCode::OK, &summary),
        Err(e) => e.into_response(),
    }
}

async fn create_session(State(m): Shared, body: Bytes) -> Response {
    let result = async {
        let request: CreateSession = parse(&body)?;
        blocking(move || m.create(request)).await
    }
    .await;
    match result {
        Ok(view) => to_json(StatusCode::CREATED, &view),
        Err(e) => e.into_response(),
    }
}

async fn get_view(State(m): Shared, Path(id): Path<String>) -> Response {
    match m.view(&id) {
        Ok(view) => to_json(StatusCode::OK, &view),
        Err(e) => e.into_response(),
    }
}

async fn apply_action(State(m): Shared, Path(id): Path<String>, body: Bytes) -> Response {
    let result = async {
        let request: ActionRequest = parse(&body)?;
        blocking(move || m.apply(&id, request)).await
    }
    .await;
    match result {
        Ok(body) => json_body(StatusCode::OK, body),
        Err(e) => e.into_response(),
    }
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    weights: Option<String>,
}

/// Parses `w1,w2,...`.
pub fn parse_weights(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|w| {
            let x: f64 = w.trim().parse().map_err(|_| format!("`{w}` is not a number"))?;
            if x.is_finite() && x >= 0.0 {
                Ok(x)
            } else {
                Err(format!("weight `{w}` must be finite and non-negative"))
            }
        })
        .collect()
}

async fn get_report(State(m): Shared, Path(id): Path<String>, Query(q): Query<ReportQuery>) -> Response {
    let weights = match q.weights.as_deref().map(parse_weights).transpose() {
        Ok(w) => w,
        Err(message) => return ApiError::bad_request(message).into_response(),
    };
    match blocking(move || m.report(&id, weights)).await {
        Ok(body) => json_body(StatusCode::OK, body),
        Err(e) => e.into_response(),
    }
}

async fn get_trajectory(State(m): Shared, Path(id): Path<String>) -> Response {
    match m.trajectory(&id) {
        Ok(text) => (StatusCode::OK, [("content-type", "application/x-ndjson")], text).into_response(),
        Err(e) => e.into_response(),
    }
}
