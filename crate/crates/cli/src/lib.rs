//! Command-line driver and reference clients for the evaluation server.

pub mod client;
pub mod commands;
pub mod runner;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;
use vtt_core::kb::AnnotationSet;
use vtt_core::{KnowledgeBase, Ontology};

pub use client::{ClientError, HttpClient};
pub use runner::{run_oracle, run_random, ClientRunSummary, RunError};

/// Failures mapped onto process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input data or arguments; exit code 2.
    #[error("{0}")]
    Validation(String),
    /// The server could not be reached or broke protocol; exit code 3.
    #[error("{0}")]
    Network(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Network(_) => 3,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e.session_id {
            Some(id) => CliError::Network(format!("{}\nsession {id} can be resumed with --session {id}", e.source)),
            None => CliError::Network(e.source.to_string()),
        }
    }
}

pub fn validation(e: impl ToString) -> CliError {
    CliError::Validation(e.to_string())
}

/// Annotation directories under `dir`: `dir` itself when it holds a
/// `scene.meta`, otherwise each subdirectory that does.
pub fn scene_dirs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if dir.join("scene.meta").is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| validation(format!("{}: {e}", dir.display())))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join("scene.meta").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(validation(format!("{}: no annotation directories found", dir.display())));
    }
    Ok(dirs)
}

/// Ingests every scene under `dir`, keyed by scene id.
pub fn load_kbs(dir: &Path, ontology: &Arc<Ontology>) -> Result<BTreeMap<String, KnowledgeBase>, CliError> {
    let mut kbs = BTreeMap::new();
    for d in scene_dirs(dir)? {
        let docs = AnnotationSet::read_dir(&d).map_err(validation)?;
        let kb = KnowledgeBase::ingest(&docs, Arc::clone(ontology)).map_err(|e| validation(format!("{}: {e}", d.display())))?;
        let id = kb.meta.scene_id.clone();
        if kbs.insert(id.clone(), kb).is_some() {
            return Err(validation(format!("scene `{id}` appears twice under {}", dir.display())));
        }
    }
    Ok(kbs)
}

pub fn load_ontology(path: Option<&Path>) -> Result<Arc<Ontology>, CliError> {
    match path {
        None => Ok(Arc::new(Ontology::builtin())),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| validation(format!("{}: {e}", p.display())))?;
            Ontology::load(&text).map(Arc::new).map_err(|e| validation(format!("{}: {e}", p.display())))
        }
    }
}
