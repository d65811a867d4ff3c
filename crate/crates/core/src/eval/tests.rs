use std::sync::Arc;

use super::*;
use crate::testkit::garden_suite;
use crate::{Answer, EvalError, Ontology, Point, QueryKind};

fn session(suite: &EvaluationSuite) -> Session {
    Session::new("s1", Arc::new(suite.clone()), Arc::new(Ontology::builtin()), GradingConfig::default())
}

fn truth_of(suite: &EvaluationSuite, id: &str) -> Answer {
    suite.items().find(|i| i.query.id == id).unwrap().ground_truth.clone()
}

/// Drives a session to the end, answering with `decide`; returns served ids.
fn drive(s: &mut Session, mut decide: impl FnMut(&str) -> Answer) -> Vec<String> {
    let mut served = Vec::new();
    loop {
        match s.next().unwrap() {
            NextItem::Query { query_id, .. } => {
                let a = decide(&query_id);
                s.submit(&query_id, a).unwrap();
                served.push(query_id);
            }
            NextItem::Done { .. } => return served,
            _ => {}
        }
    }
}

#[test]
fn fixture_ground_truths() {
    let suite = garden_suite();
    let t = |id| truth_of(&suite, id);
    assert_eq!(t("g-1-1"), Answer::Bool(true));
    assert_eq!(t("g-1-2"), Answer::Bool(true));
    assert_eq!(t("g-1-5"), Answer::Bool(false));
    assert_eq!(t("g-1-6"), Answer::TimeInterval { start: 10.0, end: 10.0 });
    assert!(matches!(t("g-1-7"), Answer::Polygon(_)));
    assert_eq!(t("g-2-1"), Answer::Bool(false));
    assert_eq!(t("g-3-4"), Answer::Label("ball".into()));
    suite.validate(&Ontology::builtin()).unwrap();
}

#[test]
fn markers_and_truthful_run() {
    let suite = garden_suite();
    let mut s = session(&suite);
    assert_eq!(s.next().unwrap(), NextItem::SceneStart { scene: "garden".into() });
    assert_eq!(
        s.next().unwrap(),
        NextItem::StorylineStart { scene: "garden".into(), storyline: "storyline_001".into() }
    );
    let NextItem::Query { query_id, .. } = s.next().unwrap() else { panic!() };
    assert_eq!(query_id, "g-1-1");
    let fb = s.submit("g-1-1", Answer::Bool(true)).unwrap();
    assert_eq!(fb.verdict, Verdict::Correct);
    assert_eq!(fb.ground_truth, Answer::Bool(true));
    let served = drive(&mut s, |id| truth_of(&suite, id));
    assert!(!served.contains(&"g-2-2".to_string()));
    assert_eq!(s.skipped(), ["g-2-2"]);
    let r = s.score();
    assert_eq!((r.accuracy, r.respond_rate, r.detection_rate), (1.0, 1.0, 1.0));
    assert_eq!(r.definitions_total, 5);
    assert_eq!(r.nondef_total, 8);
    assert_eq!(r.skipped, 1);
    assert!(matches!(s.next().unwrap(), NextItem::Done { .. }));
}

#[test]
fn skipped_ids_reported_with_next_query() {
    let suite = garden_suite();
    let mut s = session(&suite);
    let mut reported = Vec::new();
    loop {
        match s.next().unwrap() {
            NextItem::Query { query_id, skipped, .. } => {
                reported.extend(skipped);
                s.submit(&query_id, truth_of(&suite, &query_id)).unwrap();
            }
            NextItem::Done { skipped } => {
                reported.extend(skipped);
                break;
            }
            _ => {}
        }
    }
    assert_eq!(reported, ["g-2-2"]);
}

#[test]
fn pending_answer_required() {
    let suite = garden_suite();
    let mut s = session(&suite);
    s.next().unwrap();
    s.next().unwrap();
    s.next().unwrap();
    assert_eq!(s.next(), Err(EvalError::PendingAnswerRequired("g-1-1".into())));
}

#[test]
fn submission_errors() {
    let suite = garden_suite();
    let mut s = session(&suite);
    assert_eq!(s.submit("g-1-1", Answer::Bool(true)), Err(EvalError::NoPending));
    for _ in 0..3 {
        s.next().unwrap();
    }
    assert!(matches!(s.submit("g-1-2", Answer::Bool(true)), Err(EvalError::IdMismatch { .. })));
    assert!(matches!(s.submit("g-1-1", Answer::Label("x".into())), Err(EvalError::KindMismatch { .. })));
    s.submit("g-1-1", Answer::Bool(true)).unwrap();
    assert_eq!(s.submit("g-1-1", Answer::Bool(false)), Err(EvalError::AlreadyAnswered("g-1-1".into())));
    s.next().unwrap();
    s.submit("g-1-2", Answer::Bool(true)).unwrap();
    s.next().unwrap();
    s.submit("g-1-3", Answer::Bool(true)).unwrap();
    s.next().unwrap();
    s.submit("g-1-4", Answer::Bool(true)).unwrap();
    s.next().unwrap();
    s.submit("g-1-5", Answer::Bool(true)).unwrap();
    s.next().unwrap();
    let bad = Answer::TimeInterval { start: 5.0, end: 1.0 };
    assert!(matches!(s.submit("g-1-6", bad), Err(EvalError::InvalidAnswer(_))));
    assert_eq!(s.pending_query(), Some("g-1-6"));
}

#[test]
fn missed_definition_skips_dependents() {
    let suite = garden_suite();
    let mut s = session(&suite);
    let served = drive(&mut s, |id| if id == "g-1-1" { Answer::Bool(false) } else { truth_of(&suite, id) });
    for id in ["g-1-3", "g-1-4", "g-1-5", "g-1-6", "g-1-7"] {
        assert!(!served.contains(&id.to_string()), "{id} served");
    }
    let r = s.score();
    assert_eq!(r.definitions_detected, 4);
    assert_eq!(r.skipped, 6);
}

#[test]
fn unable_definition_fails_label() {
    let suite = garden_suite();
    let mut s = session(&suite);
    let served = drive(&mut s, |id| if id == "g-3-1" { Answer::Unable } else { truth_of(&suite, id) });
    assert!(!served.contains(&"g-3-3".to_string()));
    assert!(served.contains(&"g-3-2".to_string()));
}

#[test]
fn gating_soundness_over_all_definition_decisions() {
    let suite = garden_suite();
    let defs: Vec<String> =
        suite.items().filter(|i| i.query.kind == QueryKind::Definition).map(|i| i.query.id.clone()).collect();
    for mask in 0u32..(1 << defs.len()) {
        let mut s = session(&suite);
        let mut failed: Vec<String> = Vec::new();
        let mut storyline = String::new();
        loop {
            match s.next().unwrap() {
                NextItem::StorylineStart { storyline: sl, .. } => {
                    storyline = sl;
                    failed.clear();
                }
                NextItem::Query { query_id, .. } => {
                    let item = suite.items().find(|i| i.query.id == query_id).unwrap();
                    for lbl in item.query.referenced_labels() {
                        assert!(!failed.contains(&lbl), "{storyline}: {query_id} served after {lbl} failed");
                    }
                    let a = match defs.iter().position(|d| *d == query_id) {
                        Some(k) => Answer::Bool(mask & (1 << k) != 0),
                        None => Answer::Unable,
                    };
                    if let (Some(lbl), Answer::Bool(said)) = (&item.query.defines_label, &a) {
                        if !(*said && item.ground_truth == Answer::Bool(true)) {
                            failed.push(lbl.clone());
                        }
                    }
                    s.submit(&query_id, a).unwrap();
                }
                NextItem::Done { .. } => break,
                NextItem::SceneStart { .. } => {}
            }
        }
    }
}

#[test]
fn replay_reproduces_score_bytes() {
    let suite = garden_suite();
    let mut s = session(&suite);
    let mut lines = vec![header_line(&s.header())];
    let mut k = 0;
    loop {
        match s.next().unwrap() {
            NextItem::Query { query_id, .. } => {
                k += 1;
                let a = if k % 3 == 0 { Answer::Unable } else { truth_of(&suite, &query_id) };
                let (_, rec) = s.submit_logged(&query_id, a).unwrap();
                lines.push(record_line(&rec));
            }
            NextItem::Done { .. } => break,
            _ => {}
        }
    }
    let log = lines.join("\n") + "\n";
    let (h, recs) = parse_log(&log).unwrap();
    let replayed =
        Session::replay(&h, &recs, Arc::new(suite.clone()), Arc::new(Ontology::builtin()), GradingConfig::default()).unwrap();
    assert_eq!(replayed.score().to_json(), s.score().to_json());
    assert_eq!(replayed.answer_log(), s.answer_log());

    // a tampered verdict no longer reproduces
    let tampered = log.replacen("\"correct\"", "\"incorrect\"", 1);
    let (h, recs) = parse_log(&tampered).unwrap();
    assert!(Session::replay(&h, &recs, Arc::new(suite), Arc::new(Ontology::builtin()), GradingConfig::default()).is_err());
}

#[test]
fn suite_roundtrips_through_disk() {
    let mut suite = garden_suite();
    suite.meta.insert("grade.when_iou".into(), "0.6".into());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("garden-fixture");
    suite.write_to(&path).unwrap();
    let back = EvaluationSuite::read_from(&path).unwrap();
    assert_eq!(back, suite);
    assert_eq!(back.grading().unwrap().when_iou, 0.6);
    assert!(path.join("garden/storyline_003.xml").exists());
}

#[test]
fn storyline_xml_layout() {
    let suite = garden_suite();
    let xml = suite.scenes[0].storylines[1].to_xml("garden");
    assert!(xml.starts_with("<storyline id=\"storyline_002\" scene=\"garden\">\n  <item>\n    <define id=\"g-2-1\""));
    assert!(xml.contains("<ground-truth type=\"bool\">false</ground-truth>"));
    let (scene, sl) = Storyline::from_xml(&xml, "x").unwrap();
    assert_eq!(scene, "garden");
    assert_eq!(sl, suite.scenes[0].storylines[1]);
}

#[test]
fn validator_rejects_broken_suites() {
    let ont = Ontology::builtin();
    let base = garden_suite();

    let mut s = base.clone();
    s.scenes[0].storylines[0].items.remove(0);
    s.scenes[0].storylines[0].items.remove(0);
    assert!(s.validate(&ont).is_err());

    // label defined only in another story line
    let mut s = base.clone();
    let foreign = s.scenes[0].storylines[0].items[2].clone();
    s.scenes[0].storylines[1].items[2] = foreign;
    s.scenes[0].storylines[1].items[2].query.id = "moved".into();
    assert!(s.validate(&ont).is_err());

    let mut s = base.clone();
    s.scenes[0].storylines[0].items[2].ground_truth = Answer::Polygon(vec![Point::new(0.0, 0.0); 3]);
    assert!(s.validate(&ont).is_err());

    let mut s = base;
    s.scenes[0].storylines[2].items[2].query.id = "g-1-1".into();
    assert!(s.validate(&ont).is_err());
}
