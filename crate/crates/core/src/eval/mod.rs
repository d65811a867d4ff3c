//! Evaluation suites, the session protocol state machine, grading and
//! scoring.

mod grading;
mod score;
mod session;
mod suite;
pub mod wire;

pub use grading::{grade, interval_iou, GradingConfig, Verdict};
pub use score::{predicate_bin, ratio, BreakdownCell, GradedEntry, ScoreReport};
pub use session::{header_line, parse_log, record_line, AnswerRecord, Cursor, Feedback, NextItem, Session, SessionHeader};
pub use suite::{EvaluationSuite, SceneSuite, Storyline, SuiteItem};

#[cfg(test)]
mod tests;
