//! Per-session protocol state: gating, answer immutability, feedback and
//! the append-only answer log.

use std::collections::HashSet;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::grading::{grade, GradingConfig, Verdict};
use super::score::{GradedEntry, ScoreReport};
use super::suite::EvaluationSuite;
use super::wire::{NextResponse, WireAnswer};
use crate::query::{categories_of, serialize_query_xml};
use crate::{Answer, EvalError, Ontology, QueryKind};

/// Position of a query in the suite: (scene, story line, item).
pub type Cursor = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NextItem {
    SceneStart { scene: String },
    StorylineStart { scene: String, storyline: String },
    Query { query_id: String, query_xml: String, scene: String, storyline: String, skipped: Vec<String> },
    Done { skipped: Vec<String> },
}

impl From<NextItem> for NextResponse {
    fn from(n: NextItem) -> Self {
        let mut r = NextResponse {
            kind: String::new(),
            query_id: None,
            query_xml: None,
            scene: None,
            storyline: None,
            skipped: Vec::new(),
        };
        match n {
            NextItem::SceneStart { scene } => {
                r.kind = "scene_start".into();
                r.scene = Some(scene);
            }
            NextItem::StorylineStart { scene, storyline } => {
                r.kind = "storyline_start".into();
                r.scene = Some(scene);
                r.storyline = Some(storyline);
            }
            NextItem::Query { query_id, query_xml, scene, storyline, skipped } => {
                r.kind = "query".into();
                r.query_id = Some(query_id);
                r.query_xml = Some(query_xml);
                r.scene = Some(scene);
                r.storyline = Some(storyline);
                r.skipped = skipped;
            }
            NextItem::Done { skipped } => {
                r.kind = "done".into();
                r.skipped = skipped;
            }
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    pub verdict: Verdict,
    pub ground_truth: Answer,
}

/// One line of a session log after the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub query_id: String,
    pub answer: WireAnswer,
    pub verdict: Verdict,
    pub ts_ms: u64,
}

/// First line of a session log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub session_id: String,
    pub suite_id: String,
}

pub struct Session {
    session_id: String,
    suite: Arc<EvaluationSuite>,
    ontology: Arc<Ontology>,
    grading: GradingConfig,
    cursor: Cursor,
    announced_scene: Option<usize>,
    announced_storyline: Option<(usize, usize)>,
    pending: Option<Cursor>,
    answered: HashSet<String>,
    answer_log: Vec<AnswerRecord>,
    graded: Vec<GradedEntry>,
    skipped: Vec<String>,
    unreported_skips: Vec<String>,
    bound_labels: HashSet<String>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl Session {
    pub fn new(session_id: impl Into<String>, suite: Arc<EvaluationSuite>, ontology: Arc<Ontology>, grading: GradingConfig) -> Self {
        Self {
            session_id: session_id.into(),
            suite,
            ontology,
            grading,
            cursor: (0, 0, 0),
            announced_scene: None,
            announced_storyline: None,
            pending: None,
            answered: HashSet::new(),
            answer_log: Vec::new(),
            graded: Vec::new(),
            skipped: Vec::new(),
            unreported_skips: Vec::new(),
            bound_labels: HashSet::new(),
        }
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn suite_id(&self) -> &str {
        &self.suite.suite_id
    }

    pub fn header(&self) -> SessionHeader {
        SessionHeader { session_id: self.session_id.clone(), suite_id: self.suite.suite_id.clone() }
    }

    pub fn cursor(&self) -> Cursor {
        self.cursor
    }

    pub fn pending_query(&self) -> Option<&str> {
        self.pending.map(|(s, l, i)| self.suite.scenes[s].storylines[l].items[i].query.id.as_str())
    }

    pub fn answer_log(&self) -> &[AnswerRecord] {
        &self.answer_log
    }

    pub fn skipped(&self) -> &[String] {
        &self.skipped
    }

    /// Advances to the next marker or query and marks a served query pending.
    pub fn next(&mut self) -> Result<NextItem, EvalError> {
        if let Some(id) = self.pending_query() {
            return Err(EvalError::PendingAnswerRequired(id.to_string()));
        }
        let suite = Arc::clone(&self.suite);
        loop {
            let (s, l, i) = self.cursor;
            let Some(scene) = suite.scenes.get(s) else {
                return Ok(NextItem::Done { skipped: std::mem::take(&mut self.unreported_skips) });
            };
            if self.announced_scene != Some(s) {
                self.announced_scene = Some(s);
                return Ok(NextItem::SceneStart { scene: scene.scene.clone() });
            }
            let Some(sl) = scene.storylines.get(l) else {
                self.cursor = (s + 1, 0, 0);
                continue;
            };
            if self.announced_storyline != Some((s, l)) {
                self.announced_storyline = Some((s, l));
                self.bound_labels.clear();
                return Ok(NextItem::StorylineStart { scene: scene.scene.clone(), storyline: sl.id.clone() });
            }
            let Some(item) = sl.items.get(i) else {
                self.cursor = (s, l + 1, 0);
                continue;
            };
            let q = &item.query;
            if q.referenced_labels().iter().any(|lbl| !self.bound_labels.contains(lbl)) {
                self.skipped.push(q.id.clone());
                self.unreported_skips.push(q.id.clone());
                self.cursor = (s, l, i + 1);
                continue;
            }
            self.pending = Some(self.cursor);
            return Ok(NextItem::Query {
                query_id: q.id.clone(),
                query_xml: serialize_query_xml(q),
                scene: scene.scene.clone(),
                storyline: sl.id.clone(),
                skipped: std::mem::take(&mut self.unreported_skips),
            });
        }
    }

    /// Grades the answer to the pending query, records it and advances.
    pub fn submit(&mut self, query_id: &str, answer: Answer) -> Result<Feedback, EvalError> {
        self.submit_at(query_id, answer, now_ms()).map(|(f, _)| f)
    }

    fn submit_at(&mut self, query_id: &str, answer: Answer, ts_ms: u64) -> Result<(Feedback, AnswerRecord), EvalError> {
        if self.answered.contains(query_id) {
            return Err(EvalError::AlreadyAnswered(query_id.to_string()));
        }
        let Some((s, l, i)) = self.pending else {
            return Err(EvalError::NoPending);
        };
        let item = &self.suite.scenes[s].storylines[l].items[i];
        let q = &item.query;
        if q.id != query_id {
            return Err(EvalError::IdMismatch { expected: q.id.clone(), got: query_id.to_string() });
        }
        if !answer.fits(q.kind) {
            return Err(EvalError::KindMismatch { kind: q.kind.as_str().into(), answer: answer.type_name().into() });
        }
        answer.validate().map_err(|e| EvalError::InvalidAnswer(e.to_string()))?;

        let verdict = grade(q.kind, &item.ground_truth, &answer, &self.grading, &self.ontology);
        if q.kind == QueryKind::Definition {
            if let Some(label) = &q.defines_label {
                if item.ground_truth == Answer::Bool(true) && answer == Answer::Bool(true) {
                    self.bound_labels.insert(label.clone());
                }
            }
        }
        self.graded.push(GradedEntry {
            kind: q.kind,
            predicate_count: q.body.predicate_names().len(),
            categories: categories_of(q, &self.ontology),
            verdict,
        });
        let record = AnswerRecord { query_id: q.id.clone(), answer: WireAnswer::from(&answer), verdict, ts_ms };
        self.answer_log.push(record.clone());
        self.answered.insert(q.id.clone());
        let feedback = Feedback { verdict, ground_truth: item.ground_truth.clone() };
        self.pending = None;
        self.cursor = (s, l, i + 1);
        Ok((feedback, record))
    }

    /// Like [`submit`](Self::submit), also returning the log record to persist.
    pub fn submit_logged(&mut self, query_id: &str, answer: Answer) -> Result<(Feedback, AnswerRecord), EvalError> {
        self.submit_at(query_id, answer, now_ms())
    }

    pub fn score(&self) -> ScoreReport {
        ScoreReport::compute(&self.graded, self.skipped.len() as u64)
    }

    /// Rebuilds a session by re-submitting logged answers in order.
    ///
    /// Fails when the log does not follow the serving order of the suite
    /// or a recorded verdict differs from the recomputed one.
    pub fn replay(
        header: &SessionHeader,
        records: &[AnswerRecord],
        suite: Arc<EvaluationSuite>,
        ontology: Arc<Ontology>,
        grading: GradingConfig,
    ) -> Result<Self, EvalError> {
        if header.suite_id != suite.suite_id {
            return Err(EvalError::Log(format!("log is for suite `{}`, not `{}`", header.suite_id, suite.suite_id)));
        }
        let mut s = Session::new(header.session_id.clone(), suite, ontology, grading);
        for r in records {
            let served = loop {
                match s.next()? {
                    NextItem::Query { query_id, .. } => break query_id,
                    NextItem::Done { .. } => {
                        return Err(EvalError::Log(format!("`{}` answered after the suite was exhausted", r.query_id)))
                    }
                    _ => {}
                }
            };
            if served != r.query_id {
                return Err(EvalError::Log(format!("expected an answer to `{served}`, found `{}`", r.query_id)));
            }
            let answer = Answer::try_from(&r.answer).map_err(EvalError::Log)?;
            let (fb, _) = s.submit_at(&r.query_id, answer, r.ts_ms)?;
            if fb.verdict != r.verdict {
                return Err(EvalError::Log(format!("verdict for `{}` does not reproduce", r.query_id)));
            }
        }
        Ok(s)
    }
}

/// Serialized log lines: the header followed by one record per answer.
pub fn header_line(h: &SessionHeader) -> String {
    serde_json::to_string(h).expect("header serializes")
}

pub fn record_line(r: &AnswerRecord) -> String {
    serde_json::to_string(r).expect("record serializes")
}

pub fn parse_log(text: &str) -> Result<(SessionHeader, Vec<AnswerRecord>), EvalError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let first = lines.next().ok_or_else(|| EvalError::Log("empty log".into()))?;
    let header: SessionHeader = serde_json::from_str(first).map_err(|e| EvalError::Log(format!("header: {e}")))?;
    let records = lines
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Log(format!("record {}: {e}", i + 1))))
        .collect::<Result<Vec<AnswerRecord>, _>>()?;
    Ok((header, records))
}
