//! Blocking HTTP client for the evaluation protocol.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use ureq::Agent;
use vtt_core::eval::wire::{
    AnswerRequest, AnswerResponse, CreateSessionRequest, CreateSessionResponse, ErrorResponse, NextResponse, WireAnswer,
};
use vtt_core::eval::ScoreReport;
use vtt_core::Answer;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("network error: {0}")]
    Network(String),
    #[error("server replied {status} {code}: {error}")]
    Protocol { status: u16, code: String, error: String },
    #[error("malformed server reply: {0}")]
    Decode(String),
}

pub struct HttpClient {
    agent: Agent,
    base: String,
}

impl HttpClient {
    /// `base` is `http://host:port`; a bare `host:port` is accepted too.
    pub fn new(base: &str) -> Self {
        let base = base.trim_end_matches('/');
        let base = if base.contains("://") { base.to_string() } else { format!("http://{base}") };
        let agent: Agent = Agent::config_builder().http_status_as_error(false).build().into();
        Self { agent, base }
    }

    fn finish<T: DeserializeOwned>(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<T, ClientError> {
        let mut resp = resp.map_err(|e| ClientError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| ClientError::Network(e.to_string()))?;
        if (200..300).contains(&status) {
            return serde_json::from_str(&text).map_err(|e| ClientError::Decode(format!("{e}: {text}")));
        }
        match serde_json::from_str::<ErrorResponse>(&text) {
            Ok(e) => Err(ClientError::Protocol { status, code: e.code, error: e.error }),
            Err(_) => Err(ClientError::Protocol { status, code: "unknown".into(), error: text }),
        }
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Self::finish(self.agent.get(format!("{}{path}", self.base)).call())
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        Self::finish(self.agent.post(format!("{}{path}", self.base)).send_json(body))
    }

    pub fn create_session(&self, suite_id: &str) -> Result<String, ClientError> {
        let r: CreateSessionResponse = self.post("/v1/sessions", &CreateSessionRequest { suite_id: suite_id.to_string() })?;
        Ok(r.session_id)
    }

    pub fn next(&self, session_id: &str) -> Result<NextResponse, ClientError> {
        self.get(&format!("/v1/sessions/{session_id}/next"))
    }

    pub fn answer(&self, session_id: &str, query_id: &str, answer: &Answer) -> Result<AnswerResponse, ClientError> {
        let req = AnswerRequest { query_id: query_id.to_string(), answer: WireAnswer::from(answer) };
        self.post(&format!("/v1/sessions/{session_id}/answers"), &req)
    }

    pub fn score(&self, session_id: &str) -> Result<ScoreReport, ClientError> {
        self.get(&format!("/v1/sessions/{session_id}/score"))
    }
}
