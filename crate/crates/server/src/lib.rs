//! HTTP evaluation server.
//!
//! | method | path                          | success               | errors              |
//! |--------|-------------------------------|-----------------------|---------------------|
//! | POST   | `/v1/sessions`                | 201 `{session_id}`    | 404 unknown suite   |
//! | GET    | `/v1/sessions/{id}/next`      | 200 marker or query   | 409 pending answer  |
//! | POST   | `/v1/sessions/{id}/answers`   | 200 verdict and truth | 409, 422            |
//! | GET    | `/v1/sessions/{id}/score`     | 200 score report      | 404 unknown session |
//!
//! Error bodies are `{"code": ..., "error": ...}`. Every session writes an
//! append-only JSONL log, `<log_dir>/<session_id>.jsonl`, which is replayed
//! when the server starts.

mod error;
mod state;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use vtt_core::eval::wire::{AnswerRequest, CreateSessionRequest, CreateSessionResponse};

pub use error::{ApiError, ServerError};
pub use state::{read_suites, AppState, SuiteEntry};

type Shared = Arc<AppState>;

fn parse<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(ApiError::bad_request)
}

async fn create_session(State(state): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSessionRequest = parse(&body)?;
    let session_id = state.create_session(&req.suite_id)?;
    Ok((StatusCode::CREATED, Json(CreateSessionResponse { session_id })).into_response())
}

async fn next(State(state): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(state.next(&id)?).into_response())
}

async fn answer(State(state): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let req: AnswerRequest = parse(&body)?;
    Ok(Json(state.answer(&id, &req)?).into_response())
}

async fn score(State(state): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let report = state.score(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], report.to_json()).into_response())
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/next", get(next))
        .route("/v1/sessions/{id}/answers", post(answer))
        .route("/v1/sessions/{id}/score", get(score))
        .with_state(state)
}

/// Serves on `listener` until `shutdown` resolves.
pub async fn serve(listener: TcpListener, state: Shared, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// A server running on its own thread and runtime.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    /// Binds `listen` (port 0 picks a free port) and starts serving.
    pub fn spawn(state: Shared, listen: &str) -> Result<Self, ServerError> {
        let bind_err = |source| ServerError::Bind { addr: listen.to_string(), source };
        let std_listener = std::net::TcpListener::bind(listen).map_err(bind_err)?;
        std_listener.set_nonblocking(true).map_err(bind_err)?;
        let addr = std_listener.local_addr().map_err(bind_err)?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
            rt.block_on(async move {
                let listener = TcpListener::from_std(std_listener)?;
                serve(listener, state, async move {
                    let _ = rx.await;
                })
                .await
            })
        });
        Ok(Self { addr, stop: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `http://host:port`
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for the server thread.
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

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}
