use std::collections::BTreeMap;
use std::sync::Arc;

use vtt_core::engine::answer_query;
use vtt_core::eval::{header_line, parse_log, record_line, EvaluationSuite, NextItem, Session};
use vtt_core::generator::{generate_suite, GenConfig};
use vtt_core::kb::AnnotationSet;
use vtt_core::query::{parse_query_xml, serialize_query_xml};
use vtt_core::synth::{builtin_scenarios, generate_scene};
use vtt_core::{Answer, KnowledgeBase, Ontology, QueryKind, StoryContext};

fn scenes(ont: &Arc<Ontology>) -> BTreeMap<String, KnowledgeBase> {
    builtin_scenarios()
        .iter()
        .take(2)
        .map(|s| {
            let kb = KnowledgeBase::ingest(&generate_scene(s, ont).unwrap(), Arc::clone(ont)).unwrap();
            (kb.meta.scene_id.clone(), kb)
        })
        .collect()
}

fn small_suite(ont: &Ontology, kbs: &BTreeMap<String, KnowledgeBase>, seed: u64) -> (EvaluationSuite, GenConfig) {
    let mut cfg = GenConfig::new(seed, ont);
    cfg.storylines_per_scene = 6;
    let refs: Vec<&KnowledgeBase> = kbs.values().collect();
    (generate_suite("pipeline", &refs, ont, &cfg).unwrap(), cfg)
}

#[test]
fn annotations_survive_a_trip_through_disk() {
    let ont = Arc::new(Ontology::builtin());
    let script = &builtin_scenarios()[0];
    let docs = generate_scene(script, &ont).unwrap();
    let dir = tempfile::tempdir().unwrap();
    docs.write_dir(dir.path()).unwrap();
    let back = AnnotationSet::read_dir(dir.path()).unwrap();
    assert_eq!(back.checksum(), docs.checksum());

    let a = KnowledgeBase::ingest(&docs, Arc::clone(&ont)).unwrap();
    let b = KnowledgeBase::ingest(&back, ont).unwrap();
    assert_eq!(a.checksum(), b.checksum());
    assert_eq!(a.entity_ids(), b.entity_ids());
}

#[test]
fn suite_files_round_trip_and_validate() {
    let ont = Arc::new(Ontology::builtin());
    let kbs = scenes(&ont);
    let (suite, _) = small_suite(&ont, &kbs, 5);
    suite.validate(&ont).unwrap();

    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join(&suite.suite_id);
    suite.write_to(&dir).unwrap();
    let back = EvaluationSuite::read_from(&dir).unwrap();
    assert_eq!(back, suite);
    assert_eq!(back.query_count(), suite.query_count());
}

#[test]
fn every_generated_query_round_trips_through_xml() {
    let ont = Arc::new(Ontology::builtin());
    let kbs = scenes(&ont);
    let (suite, _) = small_suite(&ont, &kbs, 8);
    for item in suite.items() {
        let xml = serialize_query_xml(&item.query);
        let parsed = parse_query_xml(&xml).unwrap();
        assert_eq!(parsed, item.query, "{xml}");
        assert_eq!(serialize_query_xml(&parsed), xml);
    }
}

#[test]
fn ground_truth_matches_a_fresh_engine_pass() {
    let ont = Arc::new(Ontology::builtin());
    let kbs = scenes(&ont);
    let (suite, cfg) = small_suite(&ont, &kbs, 13);
    for scene in &suite.scenes {
        let kb = &kbs[&scene.scene];
        for sl in &scene.storylines {
            let mut ctx = StoryContext::new();
            for item in &sl.items {
                let got = answer_query(kb, &mut ctx, &item.query, &cfg.geometry).into_answer();
                assert_eq!(got, item.ground_truth, "{}", serialize_query_xml(&item.query));
            }
        }
    }
}

#[test]
fn truthful_session_scores_perfectly_and_replays_from_its_log() {
    let ont = Arc::new(Ontology::builtin());
    let kbs = scenes(&ont);
    let (suite, cfg) = small_suite(&ont, &kbs, 21);
    let suite = Arc::new(suite);
    let grading = suite.grading().unwrap();
    let mut session = Session::new("s1", Arc::clone(&suite), Arc::clone(&ont), grading);

    let mut log = header_line(&session.header());
    log.push('\n');
    let mut ctx = StoryContext::new();
    let mut current = (String::new(), String::new());
    loop {
        match session.next().unwrap() {
            NextItem::SceneStart { .. } | NextItem::StorylineStart { .. } => continue,
            NextItem::Done { skipped } => {
                assert!(skipped.is_empty());
                break;
            }
            NextItem::Query { query_id, query_xml, scene, storyline, .. } => {
                if (scene.clone(), storyline.clone()) != current {
                    ctx = StoryContext::new();
                    current = (scene.clone(), storyline);
                }
                let q = parse_query_xml(&query_xml).unwrap();
                let answer = answer_query(&kbs[&scene], &mut ctx, &q, &cfg.geometry).into_answer();
                let (_, record) = session.submit_logged(&query_id, answer).unwrap();
                log.push_str(&record_line(&record));
                log.push('\n');
            }
        }
    }

    let report = session.score();
    assert_eq!(report.accuracy, 1.0);
    assert_eq!(report.respond_rate, 1.0);
    assert_eq!(report.detection_rate, 1.0);

    let (header, records) = parse_log(&log).unwrap();
    let replayed = Session::replay(&header, &records, suite, ont, grading).unwrap();
    assert_eq!(replayed.score().to_json(), report.to_json());
}

#[test]
fn generation_is_seed_deterministic() {
    let ont = Arc::new(Ontology::builtin());
    let kbs = scenes(&ont);
    let (a, _) = small_suite(&ont, &kbs, 34);
    let (b, _) = small_suite(&ont, &kbs, 34);
    let (c, _) = small_suite(&ont, &kbs, 35);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.items().any(|i| i.query.kind == QueryKind::Definition));
    assert!(a.items().any(|i| i.ground_truth == Answer::Bool(false)));
}
