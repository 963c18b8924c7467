//! HTTP/JSON API over [`App`].
//!
//! Handlers that run a dialogue turn or call a model hop onto the blocking
//! pool, since providers use blocking I/O.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use goalflow_core::qa::{Document, DEFAULT_TOP_K};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;

use crate::app::{App, AppError};
use crate::repo_yaml::serialize_workflow;

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let mut body = json!({ "error": self.to_string(), "status": status.as_u16() });
        if let AppError::Unprocessable { violations, .. } = &self {
            body["violations"] = serde_json::to_value(violations).unwrap_or_default();
        }
        (status, Json(body)).into_response()
    }
}

type Shared = Arc<App>;

async fn blocking<T, F>(f: F) -> Result<T, AppError>
where
    F: FnOnce() -> Result<T, AppError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AppError::Internal(format!("worker failed: {e}")))?
}

fn utf8(body: &Bytes) -> Result<&str, AppError> {
    std::str::from_utf8(body).map_err(|_| AppError::BadRequest("body is not UTF-8".into()))
}

async fn create_session(State(app): State<Shared>) -> Result<Response, AppError> {
    let s = blocking(move || app.create_session()).await?;
    let body = json!({
        "session_id": s.session_id,
        "state": s.dialogue_state,
        "created_at": s.created_at,
    });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_session(State(app): State<Shared>, Path(id): Path<String>) -> Result<Response, AppError> {
    let view = blocking(move || app.get_session(&id)).await?;
    Ok(Json(view).into_response())
}

#[derive(Deserialize)]
struct MessageBody {
    text: String,
}

async fn post_message(State(app): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, AppError> {
    let msg: MessageBody =
        serde_json::from_slice(&body).map_err(|e| AppError::BadRequest(format!("expected {{\"text\": ...}}: {e}")))?;
    let app2 = app.clone();
    let id2 = id.clone();
    if !app.sessions().exists(&id) {
        return Err(AppError::NotFound(format!("session {id:?} does not exist")));
    }
    if msg.text.trim().is_empty() {
        return Err(AppError::BadRequest("message text is empty".into()));
    }
    let reply = blocking(move || app2.post_message(&id2, &msg.text)).await?;
    Ok(Json(reply).into_response())
}

async fn export_session(State(app): State<Shared>, Path(id): Path<String>) -> Result<Response, AppError> {
    let t = blocking(move || app.export(&id)).await?;
    Ok(Json(t).into_response())
}

async fn list_goals(State(app): State<Shared>) -> Response {
    Json(json!({ "goals": app.goals() })).into_response()
}

async fn add_goals(State(app): State<Shared>, body: Bytes) -> Result<Response, AppError> {
    let text = utf8(&body)?.to_string();
    let app2 = app.clone();
    let added = blocking(move || app2.add_goals(&text)).await?;
    let body = json!({ "added": added, "goal_count": app.engine().repo().len() });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

#[derive(Deserialize)]
struct TranslateQuery {
    #[serde(default)]
    offline: bool,
}

async fn translate(
    State(app): State<Shared>,
    Query(q): Query<TranslateQuery>,
    body: Bytes,
) -> Result<Response, AppError> {
    let text = utf8(&body)?.to_string();
    let t = blocking(move || app.translate(&text, q.offline)).await?;
    let yaml = serialize_workflow(&t.workflow);
    let mut resp = (StatusCode::OK, yaml).into_response();
    let headers = resp.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/yaml"));
    headers.insert(
        "x-goalflow-fallback",
        HeaderValue::from_static(if t.used_fallback { "true" } else { "false" }),
    );
    Ok(resp)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DocumentsBody {
    Many(Vec<Document>),
    One(Document),
}

async fn ingest(State(app): State<Shared>, body: Bytes) -> Result<Response, AppError> {
    let docs = match serde_json::from_slice(&body)
        .map_err(|e| AppError::BadRequest(format!("expected a document or a list of documents: {e}")))?
    {
        DocumentsBody::Many(d) => d,
        DocumentsBody::One(d) => vec![d],
    };
    let ingested = docs.len();
    let count = blocking(move || app.ingest(docs)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "ingested": ingested, "kb_doc_count": count }))).into_response())
}

#[derive(Deserialize)]
struct SearchQuery {
    #[serde(default)]
    q: String,
    k: Option<usize>,
}

async fn search(State(app): State<Shared>, Query(q): Query<SearchQuery>) -> Response {
    Json(app.search(&q.q, q.k.unwrap_or(DEFAULT_TOP_K))).into_response()
}

async fn healthz(State(app): State<Shared>) -> Response {
    Json(app.health()).into_response()
}

pub fn router(app: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/:id", get(get_session))
        .route("/sessions/:id/messages", post(post_message))
        .route("/sessions/:id/export", get(export_session))
        .route("/goals", get(list_goals).post(add_goals))
        .route("/goals/translate", post(translate))
        .route("/kb/documents", post(ingest))
        .route("/kb/search", get(search))
        .route("/healthz", get(healthz))
        .with_state(app)
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
}

/// Serve until `shutdown` resolves. In-flight requests finish first; every
/// turn is already on disk when its response is sent.
pub async fn serve<F>(app: Shared, listener: TcpListener, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(app)).with_graceful_shutdown(shutdown).await
}

/// A server on its own runtime thread, for tests and embedding.
pub struct Background {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl Background {
    pub fn start(app: Shared, listen: &str) -> std::io::Result<Self> {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        let listener = rt.block_on(TcpListener::bind(listen))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            rt.block_on(serve(app, listener, async {
                let _ = rx.await;
            }))
        });
        Ok(Self {
            addr,
            stop: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for Background {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}
