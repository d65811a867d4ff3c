//! Reference clients: the ground-truth oracle and the random baseline.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use vtt_core::engine::answer_query;
use vtt_core::eval::wire::NextResponse;
use vtt_core::eval::ScoreReport;
use vtt_core::query::parse_query_xml;
use vtt_core::{Answer, DerivedPredicateConfig, KnowledgeBase, Query, QueryKind, StoryContext};

use crate::client::{ClientError, HttpClient};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRunSummary {
    pub session_id: String,
    pub queries_served: u64,
    pub answered: u64,
    pub unable: u64,
    pub skipped_observed: u64,
    pub score: ScoreReport,
}

/// A failed run, carrying the session id when one was obtained so the run
/// can be resumed.
#[derive(Debug, Error)]
#[error("{source}")]
pub struct RunError {
    pub session_id: Option<String>,
    #[source]
    pub source: ClientError,
}

/// Answers served queries one at a time.
pub trait Responder {
    /// Called for every query with the scene and story line it belongs to.
    fn respond(&mut self, scene: &str, storyline: &str, query: &Query) -> Answer;
}

/// Drives a session to `done`. `resume` continues an existing session.
pub fn drive(
    client: &HttpClient,
    suite_id: &str,
    resume: Option<&str>,
    responder: &mut dyn Responder,
) -> Result<ClientRunSummary, RunError> {
    let session_id = match resume {
        Some(id) => id.to_string(),
        None => client.create_session(suite_id).map_err(|source| RunError { session_id: None, source })?,
    };
    let fail = |source| RunError { session_id: Some(session_id.clone()), source };
    let mut s = ClientRunSummary {
        session_id: session_id.clone(),
        queries_served: 0,
        answered: 0,
        unable: 0,
        skipped_observed: 0,
        score: ScoreReport::default(),
    };
    loop {
        let next: NextResponse = client.next(&session_id).map_err(fail)?;
        s.skipped_observed += next.skipped.len() as u64;
        match next.kind.as_str() {
            "done" => break,
            "query" => {
                let xml = next.query_xml.as_deref().unwrap_or_default();
                let query =
                    parse_query_xml(xml).map_err(|e| fail(ClientError::Decode(format!("query xml: {e}"))))?;
                let answer = responder.respond(
                    next.scene.as_deref().unwrap_or_default(),
                    next.storyline.as_deref().unwrap_or_default(),
                    &query,
                );
                s.queries_served += 1;
                if answer == Answer::Unable {
                    s.unable += 1;
                } else {
                    s.answered += 1;
                }
                client.answer(&session_id, &query.id, &answer).map_err(fail)?;
            }
            "scene_start" | "storyline_start" => {}
            other => return Err(fail(ClientError::Decode(format!("unknown reply kind `{other}`")))),
        }
    }
    s.score = client.score(&session_id).map_err(fail)?;
    Ok(s)
}

/// Answers with the query engine over local ground-truth KBs, keyed by scene.
pub struct Oracle<'a> {
    kbs: &'a BTreeMap<String, KnowledgeBase>,
    cfg: DerivedPredicateConfig,
    position: (String, String),
    ctx: StoryContext,
}

impl<'a> Oracle<'a> {
    pub fn new(kbs: &'a BTreeMap<String, KnowledgeBase>, cfg: DerivedPredicateConfig) -> Self {
        Self { kbs, cfg, position: (String::new(), String::new()), ctx: StoryContext::new() }
    }
}

impl Responder for Oracle<'_> {
    fn respond(&mut self, scene: &str, storyline: &str, query: &Query) -> Answer {
        if self.position.0 != scene || self.position.1 != storyline {
            self.position = (scene.to_string(), storyline.to_string());
            self.ctx = StoryContext::new();
        }
        match self.kbs.get(scene) {
            Some(kb) => answer_query(kb, &mut self.ctx, query, &self.cfg).into_answer(),
            None => Answer::Unable,
        }
    }
}

/// `true` to definitions, a fair coin to polar queries, `Unable` otherwise.
pub struct RandomResponder {
    rng: ChaCha8Rng,
}

impl RandomResponder {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Responder for RandomResponder {
    fn respond(&mut self, _scene: &str, _storyline: &str, query: &Query) -> Answer {
        match query.kind {
            QueryKind::Definition => Answer::Bool(true),
            QueryKind::Polar => Answer::Bool(self.rng.gen_bool(0.5)),
            _ => Answer::Unable,
        }
    }
}

pub fn run_oracle(
    server: &str,
    suite_id: &str,
    kbs: &BTreeMap<String, KnowledgeBase>,
    cfg: DerivedPredicateConfig,
    resume: Option<&str>,
) -> Result<ClientRunSummary, RunError> {
    drive(&HttpClient::new(server), suite_id, resume, &mut Oracle::new(kbs, cfg))
}

pub fn run_random(server: &str, suite_id: &str, seed: u64, resume: Option<&str>) -> Result<ClientRunSummary, RunError> {
    drive(&HttpClient::new(server), suite_id, resume, &mut RandomResponder::new(seed))
}
