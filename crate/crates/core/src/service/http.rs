//! HTTP routes over [`Service`].

use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use super::{Service, ServiceError, SubmitRequest, MAX_SOURCE_BYTES};

impl ServiceError {
    pub fn status_code(&self) -> StatusCode {
        match self {
            ServiceError::UnknownChallenge(_) | ServiceError::UnknownSubmission(_) => StatusCode::NOT_FOUND,
            ServiceError::PayloadTooLarge { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            ServiceError::NotYetAssessed(_) | ServiceError::AlreadySolved => StatusCode::CONFLICT,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = Json(json!({ "error": self.kind(), "message": self.to_string() }));
        (self.status_code(), body).into_response()
    }
}

type AppState = Arc<Service>;

async fn list_challenges(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.list_challenges())
}

async fn get_challenge(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(s.get_challenge(&id)?))
}

async fn submit(
    State(s): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<SubmitRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let Json(request) = body.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let response = s.submit(&id, request)?;
    Ok((StatusCode::ACCEPTED, Json(response)))
}

async fn get_submission(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(s.get_status(&id)?))
}

async fn request_hint(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<impl IntoResponse, ServiceError> {
    let service = Arc::clone(&s);
    // The store syncs to disk; keep that off the async threads.
    let hint = tokio::task::spawn_blocking(move || service.request_hint(&id))
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(e)))??;
    Ok(Json(hint))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json" | "map") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

/// Serves a file below `root`; `/` and directories map to `index.html`.
/// Anything that is not a plain relative path is refused.
async fn serve_static(root: Arc<PathBuf>, uri: Uri) -> Response {
    let rel = Path::new(uri.path().trim_start_matches('/'));
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return StatusCode::NOT_FOUND.into_response();
    }
    let mut path = root.join(rel);
    if path.is_dir() {
        path.push("index.html");
    }
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], Bytes::from(bytes)).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

/// Builds the API router. With `static_dir`, other GET paths are served
/// from that directory.
pub fn router(service: Arc<Service>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/challenges", get(list_challenges))
        .route("/api/challenges/{id}", get(get_challenge))
        .route("/api/challenges/{id}/submissions", post(submit))
        .route("/api/submissions/{id}", get(get_submission))
        .route("/api/submissions/{id}/hints", post(request_hint))
        // Room for a base64-encoded oversize source, so the size check
        // below can answer with a proper error body.
        .layer(DefaultBodyLimit::max(MAX_SOURCE_BYTES * 8))
        .with_state(service);
    match static_dir {
        Some(dir) => {
            let root = Arc::new(dir);
            api.fallback(move |uri: Uri| serve_static(Arc::clone(&root), uri))
        }
        None => api,
    }
}
