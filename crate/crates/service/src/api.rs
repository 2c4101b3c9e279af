//! HTTP JSON API used by the review console.
//!
//! | method | path                        | body / query                         |
//! |--------|-----------------------------|--------------------------------------|
//! | GET    | `/api/pairs`                | `status`, `page` (1-based), `page_size` |
//! | POST   | `/api/pairs/{id}/review`    | `{verdict, note?, reviewer?}`        |
//! | GET    | `/api/stats`                |                                      |
//! | GET    | `/api/export`               | `status` (default `accepted`)        |
//!
//! Errors are `{"error": <message>, "code": <slug>}`.

use std::future::Future;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use logknow_core::calibration::{CalibrationError, CalibrationStore, Page, ReviewVerdict, Stats, Verdict};
use logknow_core::{QAPair, ReviewStatus};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::RwLock;

/// Readers share the lock; every write goes through the single writer slot.
pub type SharedStore = Arc<RwLock<CalibrationStore>>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }
}

impl From<CalibrationError> for ApiError {
    fn from(err: CalibrationError) -> Self {
        let (status, code) = match &err {
            CalibrationError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            CalibrationError::DuplicateId(_) => (StatusCode::CONFLICT, "duplicate_id"),
            CalibrationError::PageSize(_) | CalibrationError::Page => (StatusCode::BAD_REQUEST, "bad_request"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self {
            status,
            code,
            message: err.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message, "code": self.code }))).into_response()
    }
}

fn parse_status(raw: Option<&str>) -> Result<Option<ReviewStatus>, ApiError> {
    match raw.map(str::trim).filter(|s| !s.is_empty() && *s != "all") {
        None => Ok(None),
        Some(s) => s.parse().map(Some).map_err(|_| ApiError::bad_request(format!("unknown status `{s}`"))),
    }
}

#[derive(Debug, Deserialize)]
struct ListQuery {
    status: Option<String>,
    page: Option<usize>,
    page_size: Option<usize>,
}

async fn list_pairs(State(store): State<SharedStore>, Query(q): Query<ListQuery>) -> Result<Json<Page>, ApiError> {
    let status = parse_status(q.status.as_deref())?;
    let page = store.read().await.list(status, q.page.unwrap_or(1), q.page_size.unwrap_or(50))?;
    Ok(Json(page))
}

#[derive(Debug, Deserialize)]
struct ReviewBody {
    verdict: Verdict,
    #[serde(default)]
    note: Option<String>,
    #[serde(default)]
    reviewer: Option<String>,
}

async fn review_pair(
    State(store): State<SharedStore>,
    Path(id): Path<String>,
    body: Result<Json<ReviewBody>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<QAPair>, ApiError> {
    let Json(body) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let verdict = ReviewVerdict {
        pair_id: id,
        verdict: body.verdict,
        note: body.note.filter(|n| !n.trim().is_empty()),
        reviewer: body.reviewer.unwrap_or_else(|| "anonymous".into()),
        reviewed_at: Utc::now(),
    };
    let pair = store.write().await.review(verdict)?;
    Ok(Json(pair))
}

async fn stats(State(store): State<SharedStore>) -> Json<Stats> {
    Json(store.read().await.stats())
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    status: Option<String>,
}

async fn export(State(store): State<SharedStore>, Query(q): Query<ExportQuery>) -> Result<Response, ApiError> {
    let status = parse_status(q.status.as_deref())?.unwrap_or(ReviewStatus::Accepted);
    let mut body = String::new();
    for pair in store.read().await.export(status) {
        body += &serde_json::to_string(&pair).map_err(|e| ApiError::bad_request(e.to_string()))?;
        body.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn fallback() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        code: "not_found",
        message: "no such route".into(),
    }
}

pub fn router(store: SharedStore) -> Router {
    Router::new()
        .route("/api/pairs", get(list_pairs))
        .route("/api/pairs/:id/review", post(review_pair))
        .route("/api/stats", get(stats))
        .route("/api/export", get(export))
        .fallback(fallback)
        .with_state(store)
}

/// Serves the API on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    store: SharedStore,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "review API listening");
    axum::serve(listener, router(store)).with_graceful_shutdown(shutdown).await
}
