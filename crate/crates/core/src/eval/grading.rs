use serde::{Deserialize, Serialize};

use crate::geometry::polygon_iou;
use crate::{Answer, Ontology, QueryKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
    NotGraded,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Correct => "correct",
            Verdict::Incorrect => "incorrect",
            Verdict::NotGraded => "not_graded",
        }
    }
}

/// Acceptance thresholds for non-polar answers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradingConfig {
    /// Minimum interval IoU for a `when` answer.
    pub when_iou: f64,
    /// Minimum polygon IoU for a `where` answer.
    pub where_iou: f64,
    /// Accept a supertype label for `what` answers ("person" for "male").
    pub lenient_what: bool,
}

impl Default for GradingConfig {
    fn default() -> Self {
        Self { when_iou: 0.5, where_iou: 0.5, lenient_what: false }
    }
}

impl GradingConfig {
    /// Sets one field by its name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let unit = |v: &str| -> Result<f64, String> {
            let x: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
            if !(0.0..=1.0).contains(&x) {
                return Err(format!("threshold {x} is outside [0, 1]"));
            }
            Ok(x)
        };
        match key {
            "when_iou" => self.when_iou = unit(value)?,
            "where_iou" => self.where_iou = unit(value)?,
            "lenient_what" => {
                self.lenient_what = value.parse().map_err(|_| format!("`{value}` is not true or false"))?;
            }
            other => return Err(format!("unknown grading key `{other}`")),
        }
        Ok(())
    }
}

/// Intersection over union of two closed intervals. Two identical
/// instants score 1.
pub fn interval_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = a.1.max(b.1) - a.0.min(b.0);
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    inter / union
}

/// Grades a submitted answer against the ground truth.
///
/// `Unable` is never graded. Shape mismatches are incorrect.
pub fn grade(kind: QueryKind, truth: &Answer, submitted: &Answer, cfg: &GradingConfig, ont: &Ontology) -> Verdict {
    if *submitted == Answer::Unable {
        return Verdict::NotGraded;
    }
    let ok = match (kind, truth, submitted) {
        (QueryKind::Definition | QueryKind::Polar, Answer::Bool(t), Answer::Bool(s)) => t == s,
        (QueryKind::What, Answer::Label(t), Answer::Label(s)) => {
            let (t, s) = (t.to_lowercase(), s.trim().to_lowercase());
            t == s || (cfg.lenient_what && ont.subtype_of(&t, &s))
        }
        (QueryKind::When, Answer::TimeInterval { start: ts, end: te }, Answer::TimeInterval { start: ss, end: se }) => {
            interval_iou((*ts, *te), (*ss, *se)) >= cfg.when_iou
        }
        (QueryKind::Where, Answer::Polygon(t), Answer::Polygon(s)) => polygon_iou(t, s) >= cfg.where_iou,
        _ => false,
    };
    if ok {
        Verdict::Correct
    } else {
        Verdict::Incorrect
    }
}
