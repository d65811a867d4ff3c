//! Shared server state: loaded suites, live sessions and their logs.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use vtt_core::config::Config;
use vtt_core::eval::wire::{AnswerRequest, AnswerResponse, NextResponse, WireAnswer};
use vtt_core::eval::{header_line, parse_log, record_line, EvaluationSuite, GradingConfig, ScoreReport, Session};
use vtt_core::{Answer, EvalError, Ontology};

use crate::error::{ApiError, ServerError};

/// A suite as served: shared read-only with its effective thresholds.
pub struct SuiteEntry {
    pub suite: Arc<EvaluationSuite>,
    pub grading: GradingConfig,
}

struct Slot {
    session: Session,
    log: File,
}

pub struct AppState {
    ontology: Arc<Ontology>,
    suites: BTreeMap<String, SuiteEntry>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Slot>>>>,
    log_dir: PathBuf,
}

fn new_session_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ServerError + '_ {
    move |source| ServerError::Io { path: path.to_path_buf(), source }
}

/// Reads every suite directory (one holding a `suite.meta`) under `dir`.
pub fn read_suites(dir: &Path) -> Result<Vec<EvaluationSuite>, ServerError> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join("suite.meta").is_file())
        .collect();
    dirs.sort();
    dirs.iter()
        .map(|d| {
            EvaluationSuite::read_from(d).map_err(|e| ServerError::Suite { suite: d.display().to_string(), msg: e.to_string() })
        })
        .collect()
}

impl AppState {
    /// Loads the suites under `config.suite_dir` and replays the logs in
    /// `config.log_dir`.
    pub fn load(config: &Config, ontology: Arc<Ontology>) -> Result<Self, ServerError> {
        let suites = read_suites(&config.suite_dir)?;
        Self::with_suites(suites, config, ontology)
    }

    pub fn with_suites(suites: Vec<EvaluationSuite>, config: &Config, ontology: Arc<Ontology>) -> Result<Self, ServerError> {
        let mut map = BTreeMap::new();
        for suite in suites {
            let invalid = |msg: String| ServerError::Suite { suite: suite.suite_id.clone(), msg };
            suite.validate(&ontology).map_err(|e| invalid(e.to_string()))?;
            let mut grading = suite.grading().map_err(|e| invalid(e.to_string()))?;
            config.apply_grading(&mut grading);
            let id = suite.suite_id.clone();
            if map.insert(id.clone(), SuiteEntry { suite: Arc::new(suite), grading }).is_some() {
                return Err(ServerError::Suite { suite: id, msg: "duplicate suite id".into() });
            }
        }
        fs::create_dir_all(&config.log_dir).map_err(io_err(&config.log_dir))?;
        let state = Self {
            ontology,
            suites: map,
            sessions: RwLock::new(HashMap::new()),
            log_dir: config.log_dir.clone(),
        };
        state.replay_logs()?;
        Ok(state)
    }

    pub fn suite_ids(&self) -> Vec<String> {
        self.suites.keys().cloned().collect()
    }

    pub fn suite(&self, suite_id: &str) -> Option<&SuiteEntry> {
        self.suites.get(suite_id)
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn log_path(&self, session_id: &str) -> PathBuf {
        self.log_dir.join(format!("{session_id}.jsonl"))
    }

    fn replay_logs(&self) -> Result<(), ServerError> {
        let mut logs: Vec<PathBuf> = fs::read_dir(&self.log_dir)
            .map_err(io_err(&self.log_dir))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        logs.sort();
        let mut sessions = self.sessions.write().unwrap();
        for path in logs {
            let bad = |msg: String| ServerError::Log { path: path.clone(), msg };
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let (header, records) = parse_log(&text).map_err(|e| bad(e.to_string()))?;
            let entry = self.suites.get(&header.suite_id).ok_or_else(|| bad(format!("unknown suite `{}`", header.suite_id)))?;
            let session = Session::replay(&header, &records, Arc::clone(&entry.suite), Arc::clone(&self.ontology), entry.grading)
                .map_err(|e| bad(e.to_string()))?;
            let log = OpenOptions::new().append(true).open(&path).map_err(io_err(&path))?;
            sessions.insert(header.session_id.clone(), Arc::new(Mutex::new(Slot { session, log })));
        }
        Ok(())
    }

    fn slot(&self, session_id: &str) -> Result<Arc<Mutex<Slot>>, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(session_id)
            .cloned()
            .ok_or_else(|| EvalError::UnknownSession(session_id.to_string()).into())
    }

    pub fn create_session(&self, suite_id: &str) -> Result<String, ApiError> {
        let entry = self.suites.get(suite_id).ok_or_else(|| EvalError::UnknownSuite(suite_id.to_string()))?;
        let mut sessions = self.sessions.write().unwrap();
        let id = loop {
            let id = new_session_id();
            if !sessions.contains_key(&id) {
                break id;
            }
        };
        let session = Session::new(id.clone(), Arc::clone(&entry.suite), Arc::clone(&self.ontology), entry.grading);
        let path = self.log_path(&id);
        let mut log = OpenOptions::new().create_new(true).append(true).open(&path).map_err(ApiError::internal)?;
        writeln!(log, "{}", header_line(&session.header())).map_err(ApiError::internal)?;
        sessions.insert(id.clone(), Arc::new(Mutex::new(Slot { session, log })));
        Ok(id)
    }

    pub fn next(&self, session_id: &str) -> Result<NextResponse, ApiError> {
        let slot = self.slot(session_id)?;
        let mut slot = slot.lock().unwrap();
        Ok(slot.session.next()?.into())
    }

    pub fn answer(&self, session_id: &str, req: &AnswerRequest) -> Result<AnswerResponse, ApiError> {
        let slot = self.slot(session_id)?;
        let mut slot = slot.lock().unwrap();
        let answer = Answer::try_from(&req.answer).map_err(|e| ApiError::from(EvalError::InvalidAnswer(e)))?;
        let (feedback, record) = slot.session.submit_logged(&req.query_id, answer)?;
        writeln!(slot.log, "{}", record_line(&record)).map_err(ApiError::internal)?;
        Ok(AnswerResponse {
            verdict: feedback.verdict.as_str().to_string(),
            ground_truth: WireAnswer::from(&feedback.ground_truth),
        })
    }

    pub fn score(&self, session_id: &str) -> Result<ScoreReport, ApiError> {
        let slot = self.slot(session_id)?;
        let slot = slot.lock().unwrap();
        Ok(slot.session.score())
    }
}
