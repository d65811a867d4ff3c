use std::path::PathBuf;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;
use vtt_core::eval::wire::ErrorResponse;
use vtt_core::EvalError;

/// Startup failures.
#[derive(Debug, Error)]
pub enum ServerError {
    #[error("suite `{suite}`: {msg}")]
    Suite { suite: String, msg: String },
    #[error("session log {path}: {msg}")]
    Log { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
}

/// A failed request: status plus the JSON error body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorResponse,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, error: impl Into<String>) -> Self {
        Self { status, body: ErrorResponse { code: code.to_string(), error: error.into() } }
    }

    pub fn bad_request(error: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", error.to_string())
    }

    pub fn internal(error: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", error.to_string())
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        let (status, code) = match &e {
            EvalError::UnknownSuite(_) => (StatusCode::NOT_FOUND, "unknown_suite"),
            EvalError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            EvalError::PendingAnswerRequired(_) => (StatusCode::CONFLICT, "pending_answer_required"),
            EvalError::NoPending => (StatusCode::CONFLICT, "no_pending"),
            EvalError::IdMismatch { .. } => (StatusCode::CONFLICT, "id_mismatch"),
            EvalError::AlreadyAnswered(_) => (StatusCode::CONFLICT, "already_answered"),
            EvalError::KindMismatch { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "kind_mismatch"),
            EvalError::InvalidAnswer(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_answer"),
            EvalError::Log(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
