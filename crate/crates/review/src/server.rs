//! HTTP JSON API for the review UI.
//!
//! - `GET /api/queue/next?annotator=ID` returns the next item or `{"done": true}`
//! - `POST /api/verdicts` takes `{image_id, anomaly_index, decision, annotator_id}`
//! - `GET /api/progress` returns `{total, pending, accepted, rejected, unsure}`
//! - `GET /api/images/{image_id}` returns the image bytes
//! - `POST /api/queue/load` takes an annotation JSONL body and (re)loads the queue
//!
//! Queue endpoints answer 409 until a queue is loaded. A verdict is fsynced to
//! the log before it is acknowledged.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anomkit_core::{jsonl, Decision, ImageAnnotation, Verdict};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Redirect, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tracing::info;

use crate::log::VerdictLog;
use crate::queue::{Progress, ReviewQueue};
use crate::ReviewError;

pub struct ReviewService {
    queue: Mutex<Option<ReviewQueue>>,
    log: VerdictLog,
    image_root: Option<PathBuf>,
}

impl ReviewService {
    /// A service with no queue loaded yet.
    pub fn new(log: VerdictLog, image_root: Option<PathBuf>) -> Self {
        Self {
            queue: Mutex::new(None),
            log,
            image_root,
        }
    }

    /// Load candidates and replay the log over them.
    pub fn load(&self, annotations: Vec<ImageAnnotation>) -> Result<usize, ReviewError> {
        let queue = ReviewQueue::new(annotations, &self.log.entries())?;
        let n = queue.items().len();
        *self.queue.lock().expect("queue lock") = Some(queue);
        Ok(n)
    }

    pub fn log(&self) -> &VerdictLog {
        &self.log
    }

    pub fn progress(&self) -> Option<Progress> {
        self.queue.lock().expect("queue lock").as_ref().map(ReviewQueue::progress)
    }

    /// Validate, persist, then apply a verdict.
    pub fn submit(&self, verdict: Verdict) -> Result<Option<()>, ReviewError> {
        let mut guard = self.queue.lock().expect("queue lock");
        let Some(queue) = guard.as_mut() else {
            return Ok(None);
        };
        queue.check(&verdict)?;
        self.log.append(&verdict)?;
        queue.record(verdict)?;
        Ok(Some(()))
    }

    fn resolve_image(&self, uri: &str) -> PathBuf {
        let p = Path::new(uri);
        match &self.image_root {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn not_loaded() -> Response {
    error(StatusCode::CONFLICT, "no review queue loaded")
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: Option<String>,
}

async fn next(State(svc): State<Arc<ReviewService>>, Query(q): Query<NextQuery>) -> Response {
    let Some(annotator) = q.annotator.filter(|a| !a.trim().is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing annotator query parameter");
    };
    let mut guard = svc.queue.lock().expect("queue lock");
    let Some(queue) = guard.as_mut() else {
        return not_loaded();
    };
    match queue.next_item(&annotator) {
        Some(item) => {
            let image_url = format!("/api/images/{}", item.image_id);
            let mut body = serde_json::to_value(&item).expect("item serializes");
            body["done"] = json!(false);
            body["image_url"] = json!(image_url);
            Json(body).into_response()
        }
        None => Json(json!({ "done": true, "progress": queue.progress() })).into_response(),
    }
}

#[derive(Deserialize)]
struct VerdictBody {
    image_id: String,
    anomaly_index: usize,
    decision: Decision,
    annotator_id: String,
}

async fn verdicts(State(svc): State<Arc<ReviewService>>, Json(body): Json<VerdictBody>) -> Response {
    let verdict = Verdict {
        image_id: body.image_id,
        anomaly_index: body.anomaly_index,
        decision: body.decision,
        annotator_id: body.annotator_id,
        timestamp: chrono::Utc::now(),
    };
    let (svc2, v) = (svc.clone(), verdict.clone());
    // the fsync blocks, so keep it off the async workers
    let outcome = match tokio::task::spawn_blocking(move || svc2.submit(v)).await {
        Ok(o) => o,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    match outcome {
        Ok(Some(())) => {
            info!(image = %verdict.image_id, index = verdict.anomaly_index, decision = %verdict.decision, "verdict");
            Json(json!({ "acknowledged": true, "verdict": verdict })).into_response()
        }
        Ok(None) => not_loaded(),
        Err(e @ ReviewError::UnknownItem { .. }) => error(StatusCode::NOT_FOUND, e.to_string()),
        Err(e @ ReviewError::EmptyAnnotator) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn progress(State(svc): State<Arc<ReviewService>>) -> Response {
    match svc.progress() {
        Some(p) => Json(p).into_response(),
        None => not_loaded(),
    }
}

async fn load(State(svc): State<Arc<ReviewService>>, body: String) -> Response {
    let annotations = match jsonl::parse_annotations(&body) {
        Ok(a) => a,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    match svc.load(annotations) {
        Ok(items) => Json(json!({ "items": items })).into_response(),
        Err(e) => error(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

fn content_type(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        Some("bmp") => "image/bmp",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

async fn image(State(svc): State<Arc<ReviewService>>, UrlPath(image_id): UrlPath<String>) -> Response {
    let uri = {
        let guard = svc.queue.lock().expect("queue lock");
        let Some(queue) = guard.as_ref() else {
            return not_loaded();
        };
        match queue.image_uri(&image_id) {
            Some(u) => u.to_string(),
            None => return error(StatusCode::NOT_FOUND, format!("unknown image `{image_id}`")),
        }
    };
    if uri.starts_with("http://") || uri.starts_with("https://") {
        return Redirect::temporary(&uri).into_response();
    }
    let path = svc.resolve_image(&uri);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(e) => error(StatusCode::NOT_FOUND, format!("{}: {e}", path.display())),
    }
}

pub fn router(service: Arc<ReviewService>) -> Router {
    Router::new()
        .route("/api/queue/next", get(next))
        .route("/api/queue/load", post(load))
        .route("/api/verdicts", post(verdicts))
        .route("/api/progress", get(progress))
        .route("/api/images/{image_id}", get(image))
        .with_state(service)
}
