use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("singular homography (det = {0:e})")]
    Singular(f64),
    #[error("homography needs 9 values, found {0}")]
    BadMatrix(usize),
    #[error("degenerate projection (w = {0:e})")]
    Degenerate(f64),
    #[error("bad box: {0}")]
    BadBox(String),
    #[error("camera `{0}` has no homography for frame {1}")]
    NoHomography(String, u64),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OntologyError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("predicate `{0}` declared more than once")]
    Duplicate(String),
    #[error("type hierarchy has a cycle through `{0}`")]
    Cycle(String),
    #[error("line {line}: `{name}` is not a declared predicate")]
    UnknownInHierarchy { line: usize, name: String },
    #[error("line {line}: `{name}` is not an object predicate")]
    NotObject { line: usize, name: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("bad query structure: {0}")]
    Structure(String),
    #[error("invalid query: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}:{line}: {msg}")]
    Format { file: String, line: usize, msg: String },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("unknown camera `{0}`")]
    UnknownCamera(String),
    #[error("`{predicate}` expects {expected} participant(s), fact `{fact}` has {found}")]
    Arity { fact: String, predicate: String, expected: usize, found: usize },
    #[error("track of `{0}` is not strictly increasing in time")]
    NonMonotoneTrack(String),
    #[error("duplicate {kind} `{id}`")]
    Duplicate { kind: &'static str, id: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("query `{0}` is awaiting an answer")]
    PendingAnswerRequired(String),
    #[error("no query is pending")]
    NoPending,
    #[error("answer is for `{got}` but `{expected}` is pending")]
    IdMismatch { expected: String, got: String },
    #[error("query `{0}` was already answered")]
    AlreadyAnswered(String),
    #[error("a {answer} answer does not fit a {kind} query")]
    KindMismatch { kind: String, answer: String },
    #[error("invalid answer: {0}")]
    InvalidAnswer(String),
    #[error("session log: {0}")]
    Log(String),
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("invalid script: {0}")]
    Script(String),
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error("generation budget exhausted: {0}")]
    Exhausted(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}
