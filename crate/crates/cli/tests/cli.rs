use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::Arc;

use vtt_cli::client::HttpClient;
use vtt_cli::runner::{drive, RandomResponder, Responder};
use vtt_cli::{load_kbs, run_oracle, run_random, CliError, ClientRunSummary};
use vtt_core::config::Config;
use vtt_core::eval::{EvaluationSuite, ScoreReport};
use vtt_core::generator::{generate_suite, GenConfig};
use vtt_core::synth::{builtin_scenarios, generate_scene};
use vtt_core::{Answer, DerivedPredicateConfig, KnowledgeBase, Ontology, Query, QueryKind};
use vtt_server::{AppState, ServerHandle};

fn vtt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vtt")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Annotation directories for two built-in scenes plus a suite over them.
struct Fixture {
    root: tempfile::TempDir,
    suite: EvaluationSuite,
}

impl Fixture {
    fn new(negative_fraction: f64, false_definition_fraction: f64) -> Self {
        let root = tempfile::tempdir().unwrap();
        let ont = Ontology::builtin();
        let mut kbs = Vec::new();
        for s in builtin_scenarios().into_iter().filter(|s| s.scene_id == "office" || s.scene_id == "garden") {
            let docs = generate_scene(&s, &ont).unwrap();
            docs.write_dir(&root.path().join("kb").join(&s.scene_id)).unwrap();
            kbs.push(KnowledgeBase::ingest(&docs, Arc::new(ont.clone())).unwrap());
        }
        let mut cfg = GenConfig::new(5, &ont);
        cfg.storylines_per_scene = 5;
        cfg.queries_per_storyline = (8, 12);
        cfg.negative_fraction = negative_fraction;
        cfg.false_definition_fraction = false_definition_fraction;
        let refs: Vec<&KnowledgeBase> = kbs.iter().collect();
        let suite = generate_suite("demo", &refs, &ont, &cfg).unwrap();
        suite.write_to(&root.path().join("suites").join("demo")).unwrap();
        Self { root, suite }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.path().join(rel)
    }

    fn config(&self) -> Config {
        Config { suite_dir: self.path("suites"), log_dir: self.path("logs"), ..Config::default() }
    }

    fn start(&self) -> ServerHandle {
        let state = AppState::load(&self.config(), Arc::new(Ontology::builtin())).unwrap();
        ServerHandle::spawn(Arc::new(state), "127.0.0.1:0").unwrap()
    }

    fn kbs(&self) -> BTreeMap<String, KnowledgeBase> {
        load_kbs(&self.path("kb"), &Arc::new(Ontology::builtin())).unwrap()
    }

    fn log_of(&self, session_id: &str) -> PathBuf {
        self.path("logs").join(format!("{session_id}.jsonl"))
    }
}

fn assert_summary_consistent(s: &ClientRunSummary) {
    assert_eq!(s.answered + s.unable, s.queries_served);
    let r = &s.score;
    assert_eq!(r.definitions_total + r.nondef_total, s.queries_served);
    assert_eq!(r.skipped, s.skipped_observed);
}

#[test]
fn ontology_check() {
    let o = vtt(&["ontology", "check"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("object\t"));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ontology");
    std::fs::write(&bad, "predicate nonsense(\n").unwrap();
    let o = vtt(&["ontology", "check", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn generate_scene_and_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("garden");
    let o = vtt(&["generate-scene", "--script", "builtin:garden", "--out", out.to_str().unwrap(), "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("scene=garden"));
    let o = vtt(&["ingest", out.to_str().unwrap()]);
    assert!(o.status.success());
    let o = vtt(&["generate-scene", "--script", "/nonexistent", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(out.join("facts.tsv"), "f1\tunicorn\tP1\t-\t0\t1\n").unwrap();
    let o = vtt(&["ingest", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn script_directory_with_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = builtin_scenarios().into_iter().find(|s| s.scene_id == "office").unwrap();
    tiny.to_files().write_dir(&dir.path().join("script")).unwrap();
    let script = dir.path().join("script");
    let run = |seed: &str, out: &str| {
        let out = dir.path().join(out);
        let o = vtt(&["generate-scene", "--script", script.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success());
        std::fs::read_to_string(out.join("observations.tsv")).unwrap()
    };
    assert_eq!(run("1", "a"), run("1", "b"));
    assert_ne!(run("1", "a"), run("2", "c"));
}

#[test]
fn generate_suite_command() {
    let fx = Fixture::new(0.5, 0.1);
    let out = fx.path("suites/cli-made");
    let kb = fx.path("kb");
    let args = ["generate-suite", "--kb", kb.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "3"];
    let o = vtt(&[&args[..], &["--storylines", "2", "--min-queries", "6", "--max-queries", "8"]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("storylines=4"));
    let suite = EvaluationSuite::read_from(&out).unwrap();
    assert_eq!(suite.suite_id, "cli-made");
    assert_eq!(suite.meta["gen.seed"], "3");
    let o = vtt(&[&args[..], &["--negative-fraction", "1.5"]].concat());
    assert_eq!(o.status.code(), Some(2));
    let o = vtt(&[&args[..], &["--weight", "person"]].concat());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_scores_perfectly_and_reproducibly() {
    let fx = Fixture::new(0.5, 0.2);
    let server = fx.start();
    let kbs = fx.kbs();
    let cfg = DerivedPredicateConfig::default();
    let a = run_oracle(&server.base_url(), "demo", &kbs, cfg, None).unwrap();
    assert_summary_consistent(&a);
    assert_eq!(a.queries_served + a.skipped_observed, fx.suite.query_count() as u64);
    assert_eq!(a.score.accuracy, 1.0);
    assert_eq!(a.score.respond_rate, 1.0);
    assert_eq!(a.score.detection_rate, 1.0);
    let b = run_oracle(&server.base_url(), "demo", &kbs, cfg, None).unwrap();
    assert_ne!(a.session_id, b.session_id);
    assert_eq!(a.score.to_json(), b.score.to_json());
}

#[test]
fn oracle_with_mismatched_geometry_still_finishes() {
    let fx = Fixture::new(0.5, 0.0);
    let server = fx.start();
    let cfg = DerivedPredicateConfig { near_threshold: 0.05, los_block_radius: 3.0, iou_threshold_def: 0.95, ..Default::default() };
    let s = run_oracle(&server.base_url(), "demo", &fx.kbs(), cfg, None).unwrap();
    assert_summary_consistent(&s);
    assert!(s.score.accuracy < 1.0 || s.score.detection_rate < 1.0 || s.score.respond_rate < 1.0);
}

#[test]
fn random_baseline_properties() {
    let fx = Fixture::new(0.5, 0.0);
    let server = fx.start();
    let a = run_random(&server.base_url(), "demo", 11, None).unwrap();
    assert_summary_consistent(&a);
    assert_eq!(a.score.detection_rate, 1.0);
    let polar = fx.suite.items().filter(|i| i.query.kind == QueryKind::Polar).count() as u64;
    assert_eq!(a.score.nondef_responded, polar);
    assert_eq!(a.answered, a.score.definitions_total + polar);
    let b = run_random(&server.base_url(), "demo", 11, None).unwrap();
    assert_eq!(a.score, b.score);
}

/// Stops the server after answering a few queries.
struct Saboteur {
    server: Option<ServerHandle>,
    inner: RandomResponder,
    left: usize,
}

impl Responder for Saboteur {
    fn respond(&mut self, scene: &str, storyline: &str, query: &Query) -> Answer {
        if self.left == 0 {
            if let Some(s) = self.server.take() {
                s.stop().unwrap();
            }
        }
        self.left = self.left.saturating_sub(1);
        self.inner.respond(scene, storyline, query)
    }
}

#[test]
fn server_stopped_mid_run_is_resumable() {
    let fx = Fixture::new(0.5, 0.0);
    let server = fx.start();
    let client = HttpClient::new(&server.base_url());
    let mut sab = Saboteur { server: Some(server), inner: RandomResponder::new(1), left: 5 };
    let err = drive(&client, "demo", None, &mut sab).unwrap_err();
    let sid = err.session_id.clone().unwrap();
    let cli_err = CliError::from(err);
    assert_eq!(cli_err.exit_code(), 3);
    assert!(cli_err.to_string().contains(&format!("--session {sid}")));

    let server = fx.start();
    let rest = run_random(&server.base_url(), "demo", 1, Some(&sid)).unwrap();
    assert_eq!(rest.session_id, sid);
    assert_eq!(rest.queries_served + 5 + rest.skipped_observed, fx.suite.query_count() as u64);
    let total = rest.score.definitions_total + rest.score.nondef_total;
    assert_eq!(total, fx.suite.query_count() as u64);
}

#[test]
fn score_and_report_from_session_log() {
    let fx = Fixture::new(0.5, 0.2);
    let server = fx.start();
    let s = run_random(&server.base_url(), "demo", 4, None).unwrap();
    let served_json = ureq::get(format!("{}/v1/sessions/{}/score", server.base_url(), s.session_id))
        .call()
        .unwrap()
        .body_mut()
        .read_to_string()
        .unwrap();
    let log = fx.log_of(&s.session_id);
    let suites = fx.path("suites");
    let o = vtt(&["score", "--session-log", log.to_str().unwrap(), "--suite-dir", suites.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), served_json + "\n");

    let o = vtt(&["report", "--format", "tsv", "--session-log", log.to_str().unwrap(), "--suite-dir", suites.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("respond_rate"));
    assert!(text.contains("predicates    \t1"));

    let summary = fx.path("summary.json");
    std::fs::write(&summary, serde_json::to_string(&s).unwrap()).unwrap();
    let o = vtt(&["report", "--format", "json", "--score", summary.to_str().unwrap()]);
    let back: ScoreReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(back, s.score);

    std::fs::write(&log, "{}\n").unwrap();
    let o = vtt(&["score", "--session-log", log.to_str().unwrap(), "--suite-dir", suites.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

fn spawn_serve(fx: &Fixture) -> (std::process::Child, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_vtt"))
        .args(["serve", "--listen", "127.0.0.1:0"])
        .arg("--suite-dir")
        .arg(fx.path("suites"))
        .arg("--log-dir")
        .arg(fx.path("logs"))
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("serve exited early").unwrap();
        if let Some(a) = line.strip_prefix("listening on ") {
            break a.to_string();
        }
    };
    (child, addr)
}

#[test]
fn serve_and_run_through_the_binary() {
    let fx = Fixture::new(0.5, 0.1);
    let (mut child, addr) = spawn_serve(&fx);
    let kb = fx.path("kb");
    let out = fx.path("oracle.json");
    let o = vtt(&["run-oracle", "--server", &addr, "--suite", "demo", "--kb", kb.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let o2 = vtt(&["run-random", "--server", &addr, "--suite", "nope"]);
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s: ClientRunSummary = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(s.score.accuracy, 1.0);
    assert_eq!(s.score.respond_rate, 1.0);
    assert_eq!(o2.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o2.stderr).contains("unknown_suite"));

    let o = vtt(&["run-random", "--server", &addr, "--suite", "demo"]);
    assert_eq!(o.status.code(), Some(3));
    let o = vtt(&["serve", "--suite-dir", fx.path("missing").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_arguments_exit_with_validation_code() {
    assert_eq!(vtt(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(vtt(&["report", "--format", "xml", "--score", "x"]).status.code(), Some(2));
    let missing: &Path = Path::new("/nonexistent/config");
    assert_eq!(vtt(&["--config", missing.to_str().unwrap(), "ontology", "check"]).status.code(), Some(2));
}
