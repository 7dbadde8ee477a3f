//! HTTP routes over a shared [`LabelStore`], plus static files for the
//! annotation UI.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use plenar_core::labels::Task;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::store::{AdjudicateRequest, LabelStore, SubmitRequest};
use crate::LabelError;

pub type SharedStore = Arc<RwLock<LabelStore>>;

const PLACEHOLDER: &str = "<!doctype html><meta charset=utf-8><title>plenar annotation</title>\
<p>No UI bundle configured. API: <code>/api/speeches/next</code>, <code>/api/labels</code>, \
<code>/api/progress</code>, <code>/api/disagreements</code>, <code>/api/adjudications</code>, \
<code>/api/export</code>.</p>";

impl IntoResponse for LabelError {
    fn into_response(self) -> Response {
        let status = match &self {
            LabelError::BadRequest(_) => StatusCode::BAD_REQUEST,
            LabelError::NotFound(_) => StatusCode::NOT_FOUND,
            LabelError::Conflict(_) => StatusCode::CONFLICT,
            LabelError::Corrupt(_) | LabelError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({"error": self.to_string()}))).into_response()
    }
}

fn parse_task(s: Option<&str>) -> Result<Task, LabelError> {
    s.ok_or_else(|| LabelError::BadRequest("missing task parameter".into()))?
        .parse()
        .map_err(|e: plenar_core::Error| LabelError::BadRequest(e.to_string()))
}

#[derive(Deserialize)]
struct NextQuery {
    task: Option<String>,
    annotator: Option<String>,
}

async fn next(State(s): State<SharedStore>, Query(q): Query<NextQuery>) -> Result<Response, LabelError> {
    let task = parse_task(q.task.as_deref())?;
    let annotator = q.annotator.unwrap_or_default();
    let store = s.read().expect("store lock");
    Ok(match store.next_speech(task, &annotator)? {
        Some(n) => Json(n).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit(State(s): State<SharedStore>, Json(req): Json<SubmitRequest>) -> Result<Response, LabelError> {
    let resp = s.write().expect("store lock").submit(req)?;
    Ok((StatusCode::CREATED, Json(resp)).into_response())
}

async fn adjudicate(State(s): State<SharedStore>, Json(req): Json<AdjudicateRequest>) -> Result<Response, LabelError> {
    let consensus = s.write().expect("store lock").adjudicate(req)?;
    Ok((StatusCode::CREATED, Json(consensus)).into_response())
}

async fn progress(State(s): State<SharedStore>) -> Response {
    Json(s.read().expect("store lock").progress()).into_response()
}

async fn disagreements(State(s): State<SharedStore>) -> Response {
    Json(s.read().expect("store lock").disagreements()).into_response()
}

#[derive(Deserialize)]
struct ExportQuery {
    task: Option<String>,
}

async fn export(State(s): State<SharedStore>, Query(q): Query<ExportQuery>) -> Result<Response, LabelError> {
    let task = parse_task(q.task.as_deref())?;
    let (body, count) = s.read().expect("store lock").export_jsonl(task);
    Ok((
        [
            (header::CONTENT_TYPE, "application/x-ndjson".to_string()),
            (header::HeaderName::from_static("x-label-count"), count.to_string()),
        ],
        body,
    )
        .into_response())
}

/// API routes, with `ui_dir` (if any) served at `/`.
pub fn router(store: SharedStore, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/speeches/next", get(next))
        .route("/api/labels", post(submit))
        .route("/api/progress", get(progress))
        .route("/api/disagreements", get(disagreements))
        .route("/api/adjudications", post(adjudicate))
        .route("/api/export", get(export))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

/// Serves until ctrl-c.
pub async fn serve(store: SharedStore, ui_dir: Option<PathBuf>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
