//! HTTP review service.
//!
//! Reads are served from an immutable [`ReviewState`] snapshot. Verdicts go
//! through one writer: validate, append to the log (synced), then publish the
//! new snapshot. A verdict is acknowledged only after it is on disk.

use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use arc_swap::ArcSwap;
use axum::body::Body;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hoiforge_core::autolabel::HoiAnnotation;
use hoiforge_core::review::{export_verified, Decision, ReviewItem, ReviewState, Verdict};
use serde::{Deserialize, Serialize};

use crate::log::{LogError, VerdictLog};

pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 500;
pub const REVIEWER_HEADER: &str = "x-reviewer";

pub struct ReviewService {
    snapshot: ArcSwap<ReviewState>,
    writer: Mutex<VerdictLog>,
    data_root: PathBuf,
}

impl ReviewService {
    pub fn new(log: VerdictLog, state: ReviewState, data_root: PathBuf) -> Self {
        ReviewService { snapshot: ArcSwap::from_pointee(state), writer: Mutex::new(log), data_root }
    }

    pub fn snapshot(&self) -> Arc<ReviewState> {
        self.snapshot.load_full()
    }

    /// Validates, persists and publishes one verdict. Returns whether it
    /// became the annotation's current decision.
    pub fn record(&self, v: &Verdict) -> Result<bool, ApiError> {
        let mut log = self.writer.lock().map_err(|_| ApiError::internal("verdict writer poisoned"))?;
        let mut next = ReviewState::clone(&self.snapshot.load());
        next.check(v)?;
        log.append(v).map_err(|e| ApiError::internal(e.to_string()))?;
        let won = next.apply(v)?;
        self.snapshot.store(Arc::new(next));
        Ok(won)
    }

    /// Resolves an item's image file under the data root. Absolute paths,
    /// `..` components and symlinks leaving the root are refused.
    pub fn image_path(&self, item: &ReviewItem) -> Result<PathBuf, ApiError> {
        let rel = Path::new(&item.file);
        if !rel.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir)) {
            return Err(ApiError::forbidden(format!("image path {:?} escapes the data root", item.file)));
        }
        let not_found = || ApiError::not_found(format!("image file for {} is missing", item.image_id));
        let root = self.data_root.canonicalize().map_err(|_| not_found())?;
        let full = root.join(rel).canonicalize().map_err(|_| not_found())?;
        if !full.starts_with(&root) {
            return Err(ApiError::forbidden(format!("image path {:?} escapes the data root", item.file)));
        }
        Ok(full)
    }
}

pub fn router(service: Arc<ReviewService>) -> Router {
    Router::new()
        .route("/api/batch", get(get_batch))
        .route("/api/image/{image_id}", get(get_image))
        .route("/api/verdict", post(post_verdict))
        .route("/api/progress", get(get_progress))
        .route("/api/export", get(get_export))
        .with_state(service)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }
    fn not_found(m: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, m)
    }
    fn forbidden(m: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, m)
    }
    fn internal(m: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, m)
    }
}

impl From<hoiforge_core::Error> for ApiError {
    fn from(e: hoiforge_core::Error) -> Self {
        let status = match e {
            hoiforge_core::Error::NotFound { .. } => StatusCode::NOT_FOUND,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<LogError> for ApiError {
    fn from(e: LogError) -> Self {
        ApiError::internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(status = %self.status, "{}", self.message);
        }
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

#[derive(Debug, Deserialize)]
pub struct PageQuery {
    #[serde(default)]
    pub cursor: usize,
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BatchPage {
    pub items: Vec<ReviewItem>,
    /// Cursor of the next page, absent on the last page.
    pub next_cursor: Option<usize>,
    pub total: usize,
}

async fn get_batch(State(svc): State<Arc<ReviewService>>, Query(q): Query<PageQuery>) -> Json<BatchPage> {
    let snap = svc.snapshot();
    let items = snap.items();
    let limit = q.limit.unwrap_or(DEFAULT_PAGE).clamp(1, MAX_PAGE);
    let start = q.cursor.min(items.len());
    let end = (start + limit).min(items.len());
    Json(BatchPage {
        items: items[start..end].to_vec(),
        next_cursor: (end < items.len()).then_some(end),
        total: items.len(),
    })
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        _ => "application/octet-stream",
    }
}

async fn get_image(State(svc): State<Arc<ReviewService>>, UrlPath(image_id): UrlPath<String>) -> Result<Response, ApiError> {
    let snap = svc.snapshot();
    let item = snap.item(&image_id).ok_or_else(|| ApiError::not_found(format!("image {image_id} is not in the batch")))?;
    let path = svc.image_path(item)?;
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ApiError::not_found(format!("image file for {image_id}: {e}")))?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], Body::from(bytes)).into_response())
}

/// Verdict as posted by a client. `reviewer` falls back to the `X-Reviewer`
/// header and `timestamp` to the server clock.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictRequest {
    pub annotation_id: String,
    pub decision: Decision,
    #[serde(default)]
    pub edited_annotation: Option<HoiAnnotation>,
    #[serde(default)]
    pub reviewer: Option<String>,
    #[serde(default)]
    pub timestamp: Option<u64>,
}

pub fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

async fn post_verdict(
    State(svc): State<Arc<ReviewService>>,
    headers: HeaderMap,
    body: Result<Json<VerdictRequest>, JsonRejection>,
) -> Result<Json<Verdict>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
    let header_reviewer = headers.get(REVIEWER_HEADER).and_then(|h| h.to_str().ok()).map(str::to_owned);
    let verdict = Verdict {
        annotation_id: req.annotation_id,
        decision: req.decision,
        edited_annotation: req.edited_annotation,
        reviewer: req.reviewer.or(header_reviewer).unwrap_or_default(),
        timestamp: req.timestamp.unwrap_or_else(now_millis),
    };
    let svc2 = Arc::clone(&svc);
    let v = verdict.clone();
    let won = tokio::task::spawn_blocking(move || svc2.record(&v))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    tracing::info!(annotation = %verdict.annotation_id, decision = ?verdict.decision, reviewer = %verdict.reviewer, won, "verdict recorded");
    Ok(Json(verdict))
}

async fn get_progress(State(svc): State<Arc<ReviewService>>) -> impl IntoResponse {
    Json(svc.snapshot().progress())
}

async fn get_export(State(svc): State<Arc<ReviewService>>) -> impl IntoResponse {
    Json(export_verified(&svc.snapshot()))
}
