use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::grading::Verdict;
use crate::ontology::Category;
use crate::QueryKind;

/// One answered query as seen by the scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedEntry {
    pub kind: QueryKind,
    /// Distinct predicate names in the query body.
    pub predicate_count: usize,
    pub categories: BTreeSet<Category>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BreakdownCell {
    pub count: u64,
    pub correct: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub definitions_total: u64,
    pub definitions_detected: u64,
    pub detection_rate: f64,
    pub nondef_total: u64,
    pub nondef_responded: u64,
    pub nondef_correct: u64,
    pub respond_rate: f64,
    pub accuracy: f64,
    pub skipped: u64,
    /// Responded queries, definitions included, binned by predicate count
    /// `1`..`4` and `5+`.
    pub breakdown_by_predicate_count: BTreeMap<String, BreakdownCell>,
    /// Responded non-definition queries per predicate category; a query
    /// counts once for each category it touches.
    pub breakdown_by_category: BTreeMap<String, BreakdownCell>,
}

/// `num / den`, or 0 when `den` is 0.
pub fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn predicate_bin(n: usize) -> String {
    if n >= 5 {
        "5+".to_string()
    } else {
        n.to_string()
    }
}

fn tally(map: &mut BTreeMap<String, BreakdownCell>, key: String, correct: bool) {
    let cell = map.entry(key).or_default();
    cell.count += 1;
    cell.correct += u64::from(correct);
}

impl ScoreReport {
    pub fn compute(entries: &[GradedEntry], skipped: u64) -> Self {
        let mut r = ScoreReport { skipped, ..Default::default() };
        for e in entries {
            let responded = e.verdict != Verdict::NotGraded;
            let correct = e.verdict == Verdict::Correct;
            if e.kind == QueryKind::Definition {
                r.definitions_total += 1;
                r.definitions_detected += u64::from(correct);
            } else {
                r.nondef_total += 1;
                r.nondef_responded += u64::from(responded);
                r.nondef_correct += u64::from(correct);
                if responded {
                    for c in &e.categories {
                        tally(&mut r.breakdown_by_category, c.as_str().to_string(), correct);
                    }
                }
            }
            if responded {
                tally(&mut r.breakdown_by_predicate_count, predicate_bin(e.predicate_count), correct);
            }
        }
        r.detection_rate = ratio(r.definitions_detected, r.definitions_total);
        r.respond_rate = ratio(r.nondef_responded, r.nondef_total);
        r.accuracy = ratio(r.nondef_correct, r.nondef_responded);
        for cell in r.breakdown_by_predicate_count.values_mut().chain(r.breakdown_by_category.values_mut()) {
            cell.accuracy = ratio(cell.correct, cell.count);
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("score report serializes")
    }

    /// Headline metrics, one `name<TAB>value` line each.
    pub fn summary_tsv(&self) -> String {
        let mut out = String::new();
        let rows: [(&str, String); 9] = [
            ("definitions_total", self.definitions_total.to_string()),
            ("definitions_detected", self.definitions_detected.to_string()),
            ("detection_rate", format!("{:.4}", self.detection_rate)),
            ("nondef_total", self.nondef_total.to_string()),
            ("nondef_responded", self.nondef_responded.to_string()),
            ("nondef_correct", self.nondef_correct.to_string()),
            ("respond_rate", format!("{:.4}", self.respond_rate)),
            ("accuracy", format!("{:.4}", self.accuracy)),
            ("skipped", self.skipped.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<20}\t{v}");
        }
        out
    }

    /// Both breakdowns as a column-aligned table.
    pub fn breakdown_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<14}\t{:<12}\t{:>6}\t{:>7}\t{:>8}", "view", "bin", "count", "correct", "accuracy");
        let sections = [("predicates", &self.breakdown_by_predicate_count), ("category", &self.breakdown_by_category)];
        for (name, map) in sections {
            for (k, c) in map {
                let _ = writeln!(out, "{name:<14}\t{k:<12}\t{:>6}\t{:>7}\t{:>8.4}", c.count, c.correct, c.accuracy);
            }
        }
        out
    }
}
