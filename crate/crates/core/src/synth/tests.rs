use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::scene_to_view;
use crate::ontology::Category;

fn ont() -> Ontology {
    Ontology::builtin()
}

fn kb_of(script: &SceneScript) -> KnowledgeBase {
    let docs = generate_scene(script, &ont()).unwrap();
    KnowledgeBase::ingest(&docs, Arc::new(ont())).unwrap()
}

fn tiny() -> SceneScript {
    let h = Homography::new([[0.1, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, 1.0]]).unwrap();
    SceneScript {
        scene_id: "tiny".into(),
        seed: 3,
        duration: 10.0,
        cameras: vec![CameraSpec {
            id: "cam".into(),
            frame_rate: 2.0,
            clock_offset: 0.0,
            homography: h,
            fov: vec![Point::new(0.0, 0.0), Point::new(5.0, 0.0), Point::new(5.0, 5.0), Point::new(0.0, 5.0)],
            pan: None,
        }],
        actors: vec![ActorSpec {
            id: "P1".into(),
            object_type: "male".into(),
            waypoints: vec![(0.0, Point::new(1.0, 1.0)), (4.0, Point::new(9.0, 1.0)), (10.0, Point::new(9.0, 1.0))],
            attributes: vec![("clothing-color".into(), Some("red".into())), ("wearing-hat".into(), None)],
        }],
        props: vec![PropSpec {
            id: "W1".into(),
            object_type: "wall".into(),
            position: Point::new(3.0, 3.0),
            footprint: Some(vec![Point::new(2.5, 2.5), Point::new(3.5, 2.5), Point::new(3.5, 3.5), Point::new(2.5, 3.5)]),
        }],
        events: vec![EventSpec {
            predicate: "walking".into(),
            participants: vec!["P1".into()],
            value: None,
            start: 0.0,
            end: 4.0,
        }],
    }
}

#[test]
fn interpolation_of_waypoints() {
    let w = [(0.0, Point::new(0.0, 0.0)), (2.0, Point::new(4.0, 2.0))];
    assert_eq!(interpolate(&w, 1.0), Some(Point::new(2.0, 1.0)));
    assert_eq!(interpolate(&w, 2.0), Some(Point::new(4.0, 2.0)));
    assert_eq!(interpolate(&w, 2.1), None);
    assert_eq!(interpolate(&[], 0.0), None);
}

#[test]
fn tiny_scene_contents() {
    let s = tiny();
    let kb = kb_of(&s);
    assert_eq!(kb.track("P1").len(), 101);
    assert_eq!(kb.track("W1").len(), 101);
    assert!(kb.entity("W1").unwrap().is_static);
    // P1 reaches the fov boundary x = 5 at t = 2
    let frames: Vec<u64> = kb.observations("P1", "cam").iter().map(|o| o.frame).collect();
    assert_eq!(frames, [0, 1, 2, 3]);
    let preds: BTreeSet<&str> = kb.facts().iter().map(|f| f.predicate.as_str()).collect();
    for p in ["clothing-color", "wearing-hat", "walking", "moving", "stationary"] {
        assert!(preds.contains(p), "{p}");
    }
    let moving = kb.facts().iter().find(|f| f.predicate == "moving").unwrap();
    assert_eq!((moving.start, moving.end), (0.0, 4.0));
}

#[test]
fn script_files_roundtrip() {
    for s in std::iter::once(tiny()).chain(builtin_scenarios()) {
        let back = SceneScript::from_files(&s.to_files()).unwrap();
        assert_eq!(back, s);
    }
    let dir = tempfile::tempdir().unwrap();
    tiny().to_files().write_dir(dir.path()).unwrap();
    let files = AnnotationSet::read_dir(dir.path()).unwrap();
    assert!(files.get("events.tsv").starts_with("walking\tP1\t-\t0\t4"));
}

#[test]
fn script_validation() {
    let ont = ont();
    let mut s = tiny();
    s.events[0].participants = vec!["nobody".into()];
    assert!(matches!(generate_scene(&s, &ont), Err(GenerateError::Script(_))));
    let mut s = tiny();
    s.actors[0].waypoints.swap(0, 1);
    assert!(s.validate(&ont).is_err());
    let mut s = tiny();
    s.actors[0].object_type = "unicorn".into();
    assert!(s.validate(&ont).is_err());
    let mut s = tiny();
    s.events[0].end = 11.0;
    assert!(s.validate(&ont).is_err());
    let mut s = tiny();
    s.props[0].id = "P1".into();
    assert!(s.validate(&ont).is_err());
    // arity and argument types are checked by ingestion
    let mut s = tiny();
    s.events[0].predicate = "carrying".into();
    assert!(generate_scene(&s, &ont).is_err());
    assert!(SceneScript::from_files(&AnnotationSet::new().insert("actors.tsv", "P1\n").clone()).is_err());
}

#[test]
fn generation_is_deterministic_per_seed() {
    let ont = ont();
    let s = tiny();
    let a = generate_scene(&s, &ont).unwrap();
    assert_eq!(a, generate_scene(&s, &ont).unwrap());
    let mut other = s.clone();
    other.seed = 4;
    let b = generate_scene(&other, &ont).unwrap();
    assert_ne!(a.get("observations.tsv"), b.get("observations.tsv"));
    assert_eq!(a.get("tracks.tsv"), b.get("tracks.tsv"));
}

#[test]
fn builtin_archetypes() {
    let scripts = builtin_scenarios();
    let names: Vec<&str> = scripts.iter().map(|s| s.scene_id.as_str()).collect();
    assert_eq!(names, ["office", "auditorium", "parking-lot", "garden"]);
    let ont = ont();
    for s in &scripts {
        let kb = kb_of(s);
        let mut cats: BTreeSet<Category> = kb.facts().iter().map(|f| ont.lookup(&f.predicate).unwrap().category).collect();
        cats.insert(Category::Object);
        assert_eq!(cats.len(), Category::ALL.len(), "{} covers {cats:?}", s.scene_id);
        assert!(kb.observation_count() > 1000, "{}", s.scene_id);
    }
    let garden = scripts.iter().find(|s| s.scene_id == "garden").unwrap();
    assert!(garden.events.iter().any(|e| e.predicate == "game"));
    let office = scripts.iter().find(|s| s.scene_id == "office").unwrap();
    let chairs: BTreeSet<&str> =
        office.props.iter().filter(|p| p.object_type == "chair").map(|p| p.id.as_str()).collect();
    assert!(office.events.iter().any(|e| e.predicate == "sitting-in" && chairs.contains(e.participants[1].as_str())));
    assert!(scripts.iter().any(|s| s.cameras.iter().any(|c| c.pan.is_some())));
}

#[test]
fn persons_never_stand_while_sitting() {
    for s in builtin_scenarios() {
        for sit in s.events.iter().filter(|e| e.predicate == "sitting") {
            for other in s.events.iter().filter(|e| {
                matches!(e.predicate.as_str(), "standing" | "walking" | "running") && e.participants == sit.participants
            }) {
                assert!(other.end <= sit.start || other.start >= sit.end, "{}: {:?} vs {:?}", s.scene_id, sit, other);
            }
        }
    }
}

#[test]
fn ingest_regenerate_fixpoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for s in builtin_scenarios() {
        let kb = kb_of(&s);
        for a in &s.actors {
            let (t0, t1) = (a.waypoints[0].0, a.waypoints.last().unwrap().0);
            for _ in 0..200 {
                let t = rng.gen_range(t0..=t1);
                let want = interpolate(&a.waypoints, t).unwrap();
                let got = kb.position_at(&a.id, t).unwrap();
                assert!(want.distance(&got) < 1e-9, "{} {} at {t}: {want:?} vs {got:?}", s.scene_id, a.id);
            }
            for (t, p) in &a.waypoints {
                assert!(kb.position_at(&a.id, *t).unwrap().distance(p) < 1e-9);
            }
        }
    }
}

#[test]
fn boxes_center_on_projected_positions() {
    let tol = crate::DerivedPredicateConfig::default().projection_tolerance;
    for s in builtin_scenarios() {
        let kb = kb_of(&s);
        let mut checked = 0;
        for cam in kb.cameras() {
            for e in kb.entity_ids() {
                for o in kb.observations(e, &cam.camera_id).iter().step_by(7) {
                    let t = cam.clock_offset + o.frame as f64 / cam.frame_rate;
                    let p = kb.position_at(e, t).unwrap();
                    assert!(point_in_polygon(&p, &cam.fov_polygon));
                    let c = scene_to_view(cam, &p, o.frame).unwrap();
                    assert!(c.distance(&o.bbox.center()) < tol, "{} {e} {}@{}", s.scene_id, cam.camera_id, o.frame);
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }
}

#[test]
fn moving_camera_uses_frame_table() {
    let s = builtin_scenarios().into_iter().find(|s| s.cameras.iter().any(|c| c.pan.is_some())).unwrap();
    let docs = generate_scene(&s, &ont()).unwrap();
    let cam = s.cameras.iter().find(|c| c.pan.is_some()).unwrap();
    assert!(docs.get("cameras.tsv").contains(&format!("@{}.homography", cam.id)));
    let kb = KnowledgeBase::ingest(&docs, Arc::new(ont())).unwrap();
    let model = kb.camera(&cam.id).unwrap();
    assert!(model.is_moving());
    assert_ne!(model.homography_at(0).unwrap(), model.homography_at(100).unwrap());
}
