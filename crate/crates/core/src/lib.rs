//! Evaluation harness for story-line visual Turing tests.
//!
//! The crate holds the predicate vocabulary, the query language and its XML
//! codec, a temporal scene knowledge base built from ground-truth
//! annotations, the first-order query engine with its on-demand geometric
//! predicates, the evaluation session state machine with scoring, and the
//! generators for synthetic scenes and story-line suites.

pub mod config;
pub mod engine;
pub mod eval;
pub mod generator;
pub mod geometry;
pub mod kb;
pub mod ontology;
pub mod query;
pub mod scalar;
pub mod synth;
#[cfg(any(test, feature = "testkit"))]
pub mod testkit;

mod error;

pub use error::{
    ConfigError, EvalError, GenerateError, GeometryError, IngestError, OntologyError, QueryError, SuiteError,
};
pub use scalar::Scalar;

/// Scene and view points in `f64`, the precision used throughout the harness.
pub type Point = geometry::Point2<f64>;
pub type BBox = geometry::BBox<f64>;
pub type Homography = geometry::Homography<f64>;
pub type Polygon = Vec<Point>;

pub use engine::{EvalOutcome, StoryContext, Truth, UnableReason};
pub use geometry::DerivedPredicateConfig;
pub use kb::KnowledgeBase;
pub use ontology::Ontology;
pub use query::{Answer, Formula, Query, QueryKind};
