//! HTTP JSON API over a loaded [`Engine`], plus static files for the UI.
//!
//! The engine sits behind a versioned handle that is empty while the
//! checkpoint and index load (requests get 503) and can be swapped
//! atomically. Feedback records are appended to a JSONL log, one writer at
//! a time.

use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use crate::search::{Engine, SearchError};

/// Engine handle shared by all requests.
pub struct AppState {
    engine: RwLock<Option<(u64, Arc<Engine>)>>,
    feedback_log: PathBuf,
    feedback_lock: tokio::sync::Mutex<()>,
}

impl AppState {
    pub fn new(feedback_log: PathBuf) -> Arc<Self> {
        Arc::new(AppState {
            engine: RwLock::new(None),
            feedback_log,
            feedback_lock: tokio::sync::Mutex::new(()),
        })
    }

    /// Installs (or replaces) the engine and returns its generation.
    pub fn install(&self, engine: Engine) -> u64 {
        let mut slot = self.engine.write().expect("engine lock poisoned");
        let generation = slot.as_ref().map_or(1, |(g, _)| g + 1);
        *slot = Some((generation, Arc::new(engine)));
        generation
    }

    pub fn current(&self) -> Option<(u64, Arc<Engine>)> {
        self.engine.read().expect("engine lock poisoned").clone()
    }
}

#[derive(Debug, Deserialize)]
struct SearchRequest {
    query: String,
    #[serde(default = "default_k")]
    k: usize,
}

fn default_k() -> usize {
    10
}

#[derive(Debug, Serialize)]
struct SearchResult {
    id: String,
    rank: usize,
    score: f32,
    code_text: String,
}

/// One line of the feedback log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub query_id: String,
    pub snippet_id: String,
    pub relevant: bool,
    pub session: String,
    /// Milliseconds since the Unix epoch, stamped by the server.
    #[serde(default)]
    pub received_at: u64,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn loading() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, "index is loading")
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")))
}

async fn search(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: SearchRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    if req.k == 0 {
        return error(StatusCode::BAD_REQUEST, "k must be at least 1");
    }
    let Some((_, engine)) = state.current() else {
        return loading();
    };
    let outcome = tokio::task::spawn_blocking(move || {
        engine.search(&req.query, req.k).map(|hits| {
            hits.into_iter()
                .map(|h| SearchResult {
                    code_text: engine.index.snippets[h.index].code_text.clone(),
                    id: h.id,
                    rank: h.rank,
                    score: h.score,
                })
                .collect::<Vec<_>>()
        })
    })
    .await;
    match outcome {
        Ok(Ok(results)) => Json(json!({ "results": results })).into_response(),
        Ok(Err(SearchError::EmptyQuery)) => error(StatusCode::UNPROCESSABLE_ENTITY, "query is empty"),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn snippet(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    let Some((_, engine)) = state.current() else {
        return loading();
    };
    match engine.index.snippet(&id) {
        Some(s) => Json(s).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no snippet {id}")),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    match state.current() {
        Some((generation, engine)) => Json(json!({
            "status": "ok",
            "index_size": engine.index.len(),
            "model_version": engine.index.model_version,
            "generation": generation,
        }))
        .into_response(),
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "status": "loading" }))).into_response(),
    }
}

async fn feedback(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let mut rec: FeedbackRecord = match parse_body(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    rec.received_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64);
    let mut line = serde_json::to_vec(&rec).expect("record serializes");
    line.push(b'\n');
    let _guard = state.feedback_lock.lock().await;
    let written = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&state.feedback_log)
        .and_then(|mut f| f.write_all(&line));
    match written {
        Ok(()) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("feedback log: {e}")),
    }
}

async fn log_request(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let uri = req.uri().path().to_string();
    let start = Instant::now();
    let resp = next.run(req).await;
    log::info!(
        "{method} {uri} {} {:.1}ms",
        resp.status().as_u16(),
        start.elapsed().as_secs_f64() * 1e3
    );
    resp
}

/// API routes, with `static_dir` (the UI bundle) served for everything
/// else when given.
pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/api/search", post(search))
        .route("/api/snippet/:id", get(snippet))
        .route("/api/health", get(health))
        .route("/api/feedback", post(feedback))
        .with_state(state);
    if let Some(dir) = static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app.layer(middleware::from_fn(log_request))
}

/// Runs until `shutdown` resolves, then drains in-flight requests.
pub async fn serve<F>(listener: TcpListener, app: Router, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down");
}
