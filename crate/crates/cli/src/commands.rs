//! Subcommand definitions and their implementations.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vtt_core::config::Config;
use vtt_core::eval::{parse_log, EvaluationSuite, ScoreReport, Session};
use vtt_core::generator::{generate_suite, GenConfig};
use vtt_core::kb::AnnotationSet;
use vtt_core::ontology::Category;
use vtt_core::synth::{builtin_scenarios, generate_scene, SceneScript};
use vtt_core::{KnowledgeBase, Ontology};
use vtt_server::{AppState, ServerHandle};

use crate::{load_kbs, load_ontology, run_oracle, run_random, validation, ClientRunSummary, CliError};

#[derive(Debug, Parser)]
#[command(name = "vtt", version, about = "Story-line visual Turing test toolkit")]
pub struct Cli {
    /// Ontology declaration file; the built-in vocabulary by default.
    #[arg(long, global = true)]
    pub ontology: Option<PathBuf>,
    /// key=value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ontology utilities.
    Ontology {
        #[command(subcommand)]
        action: OntologyAction,
    },
    /// Validates an annotation directory and prints a summary.
    Ingest {
        /// Annotation directory, or a directory of them.
        dir: PathBuf,
    },
    /// Renders a scene script into an annotation directory.
    GenerateScene {
        /// Script directory, or `builtin:<name>`.
        #[arg(long)]
        script: String,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the script's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generates an evaluation suite from ground-truth annotations.
    GenerateSuite(GenerateSuiteArgs),
    /// Runs the evaluation server until interrupted.
    Serve {
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        suite_dir: Option<PathBuf>,
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Takes the test with the ground-truth oracle client.
    RunOracle {
        #[command(flatten)]
        remote: RemoteArgs,
        /// Annotation directory of the suite's scenes.
        #[arg(long)]
        kb: PathBuf,
    },
    /// Takes the test with the random baseline client.
    RunRandom {
        #[command(flatten)]
        remote: RemoteArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Recomputes a score report from a session log.
    Score {
        #[arg(long)]
        session_log: PathBuf,
        /// Directory holding the suite the log refers to.
        #[arg(long)]
        suite_dir: Option<PathBuf>,
    },
    /// Prints a score report's metrics and breakdowns.
    Report {
        #[arg(long, value_enum, default_value_t = ReportFormat::Tsv)]
        format: ReportFormat,
        /// Score report or run summary JSON.
        #[arg(long, conflicts_with = "session_log")]
        score: Option<PathBuf>,
        #[arg(long, required_unless_present = "score")]
        session_log: Option<PathBuf>,
        #[arg(long)]
        suite_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum OntologyAction {
    /// Validates a declaration file and lists predicates per category.
    Check {
        /// Declaration file; the global `--ontology` or the built-in one otherwise.
        file: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RemoteArgs {
    /// Server address, `http://host:port`.
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub server: String,
    #[arg(long)]
    pub suite: String,
    /// Resumes an existing session instead of opening one.
    #[arg(long)]
    pub session: Option<String>,
    /// Also writes the run summary JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateSuiteArgs {
    /// Annotation directory, or a directory of them; repeatable.
    #[arg(long, required = true)]
    pub kb: Vec<PathBuf>,
    /// Output directory; its name becomes the suite id.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub storylines: Option<usize>,
    #[arg(long)]
    pub min_queries: Option<usize>,
    #[arg(long)]
    pub max_queries: Option<usize>,
    #[arg(long)]
    pub negative_fraction: Option<f64>,
    #[arg(long)]
    pub false_definition_fraction: Option<f64>,
    /// `predicate=weight`; repeatable.
    #[arg(long = "weight")]
    pub weights: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Tsv,
    Json,
}

fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    match path {
        Some(p) => Config::load(p).map_err(validation),
        None => Ok(Config::default()),
    }
}

/// Runs a parsed command line, writing results to stdout.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref())?;
    let ontology_path = cli.ontology.as_deref();
    match cli.command {
        Command::Ontology { action: OntologyAction::Check { file } } => {
            let ont = load_ontology(file.as_deref().or(ontology_path))?;
            print!("{}", ontology_summary(&ont));
        }
        Command::Ingest { dir } => {
            let ont = load_ontology(ontology_path)?;
            for kb in load_kbs(&dir, &ont)?.values() {
                println!("{}", kb_summary(kb));
            }
        }
        Command::GenerateScene { script, out, seed } => {
            let ont = load_ontology(ontology_path)?;
            let mut script = load_script(&script)?;
            if let Some(seed) = seed {
                script.seed = seed;
            }
            let docs = generate_scene(&script, &ont).map_err(validation)?;
            docs.write_dir(&out).map_err(|e| validation(format!("{}: {e}", out.display())))?;
            let kb = KnowledgeBase::ingest(&docs, ont).map_err(validation)?;
            println!("{}", kb_summary(&kb));
        }
        Command::GenerateSuite(args) => generate_suite_cmd(args, &config, ontology_path)?,
        Command::Serve { listen, suite_dir, log_dir } => {
            let mut config = config;
            if let Some(l) = listen {
                config.listen = l;
            }
            if let Some(d) = suite_dir {
                config.suite_dir = d;
            }
            if let Some(d) = log_dir {
                config.log_dir = d;
            }
            serve(&config, load_ontology(ontology_path)?)?;
        }
        Command::RunOracle { remote, kb } => {
            let ont = load_ontology(ontology_path)?;
            let kbs = load_kbs(&kb, &ont)?;
            let summary = run_oracle(&remote.server, &remote.suite, &kbs, config.geometry, remote.session.as_deref())?;
            emit_summary(&summary, remote.out.as_deref())?;
        }
        Command::RunRandom { remote, seed } => {
            let summary = run_random(&remote.server, &remote.suite, seed, remote.session.as_deref())?;
            emit_summary(&summary, remote.out.as_deref())?;
        }
        Command::Score { session_log, suite_dir } => {
            let ont = load_ontology(ontology_path)?;
            let dir = suite_dir.unwrap_or_else(|| config.suite_dir.clone());
            println!("{}", replay_log(&session_log, &dir, &config, ont)?.to_json());
        }
        Command::Report { format, score, session_log, suite_dir } => {
            let report = match (score, session_log) {
                (Some(path), _) => read_score(&path)?,
                (None, Some(log)) => {
                    let dir = suite_dir.unwrap_or_else(|| config.suite_dir.clone());
                    replay_log(&log, &dir, &config, load_ontology(ontology_path)?)?
                }
                (None, None) => return Err(validation("report needs --score or --session-log")),
            };
            match format {
                ReportFormat::Json => println!("{}", report.to_json()),
                ReportFormat::Tsv => print!("{}\n{}", report.summary_tsv(), report.breakdown_tsv()),
            }
        }
    }
    Ok(())
}

pub fn ontology_summary(ont: &Ontology) -> String {
    let mut out = format!("{} predicates\n", ont.len());
    for c in Category::ALL {
        let names: Vec<&str> = ont.by_category(c).map(|p| p.name.as_str()).collect();
        out.push_str(&format!("{}\t{}\t{}\n", c.as_str(), names.len(), names.join(",")));
    }
    out
}

pub fn kb_summary(kb: &KnowledgeBase) -> String {
    let (t0, t1) = kb.time_span().unwrap_or((0.0, 0.0));
    format!(
        "scene={} entities={} cameras={} observations={} facts={} span={t0}..{t1} checksum={}",
        kb.meta.scene_id,
        kb.entity_ids().len(),
        kb.cameras().count(),
        kb.observation_count(),
        kb.facts().len(),
        kb.checksum()
    )
}

fn load_script(spec: &str) -> Result<SceneScript, CliError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return builtin_scenarios().into_iter().find(|s| s.scene_id == name).ok_or_else(|| {
            let names: Vec<String> = builtin_scenarios().into_iter().map(|s| s.scene_id).collect();
            validation(format!("no built-in scenario `{name}`; available: {}", names.join(", ")))
        });
    }
    let files = AnnotationSet::read_dir(Path::new(spec)).map_err(validation)?;
    SceneScript::from_files(&files).map_err(|e| validation(format!("{spec}: {e}")))
}

fn generate_suite_cmd(args: GenerateSuiteArgs, config: &Config, ontology_path: Option<&Path>) -> Result<(), CliError> {
    let ont = load_ontology(ontology_path)?;
    let mut kbs = Vec::new();
    for dir in &args.kb {
        kbs.extend(load_kbs(dir, &ont)?.into_values());
    }
    let mut cfg = GenConfig::new(args.seed, &ont);
    cfg.geometry = config.geometry;
    config.apply_grading(&mut cfg.grading);
    if let Some(n) = args.storylines {
        cfg.storylines_per_scene = n;
    }
    if let Some(n) = args.min_queries {
        cfg.queries_per_storyline.0 = n;
    }
    if let Some(n) = args.max_queries {
        cfg.queries_per_storyline.1 = n;
    }
    if let Some(f) = args.negative_fraction {
        cfg.negative_fraction = f;
    }
    if let Some(f) = args.false_definition_fraction {
        cfg.false_definition_fraction = f;
    }
    for w in &args.weights {
        let (k, v) = w.split_once('=').ok_or_else(|| validation(format!("`{w}` is not predicate=weight")))?;
        let v: f64 = v.parse().map_err(|_| validation(format!("`{v}` is not a number")))?;
        cfg.weights.insert(k.to_string(), v);
    }
    let suite_id = args.out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "suite".into());
    let refs: Vec<&KnowledgeBase> = kbs.iter().collect();
    let (suite, shortfall) = match generate_suite(&suite_id, &refs, &ont, &cfg) {
        Ok(s) => (s, None),
        Err(partial) => (partial.suite, Some(partial.error)),
    };
    suite.write_to(&args.out).map_err(validation)?;
    println!(
        "suite={} scenes={} storylines={} queries={}",
        suite.suite_id,
        suite.scenes.len(),
        suite.storyline_count(),
        suite.query_count()
    );
    match shortfall {
        Some(e) => Err(validation(format!("{e}; the partial suite was written to {}", args.out.display()))),
        None => Ok(()),
    }
}

fn serve(config: &Config, ont: Arc<Ontology>) -> Result<(), CliError> {
    let state = Arc::new(AppState::load(config, ont).map_err(validation)?);
    eprintln!("suites: {}", state.suite_ids().join(", "));
    let server = ServerHandle::spawn(state, &config.listen).map_err(|e| CliError::Network(e.to_string()))?;
    eprintln!("listening on {}", server.base_url());
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().map_err(|e| CliError::Network(e.to_string()))?;
    rt.block_on(async {
        let _ = tokio::signal::ctrl_c().await;
    });
    server.stop().map_err(|e| CliError::Network(e.to_string()))
}

fn emit_summary(summary: &ClientRunSummary, out: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    if let Some(p) = out {
        std::fs::write(p, &text).map_err(|e| validation(format!("{}: {e}", p.display())))?;
    }
    println!("{text}");
    Ok(())
}

/// Replays a session log against the suite it names.
pub fn replay_log(log: &Path, suite_dir: &Path, config: &Config, ont: Arc<Ontology>) -> Result<ScoreReport, CliError> {
    let text = std::fs::read_to_string(log).map_err(|e| validation(format!("{}: {e}", log.display())))?;
    let (header, records) = parse_log(&text).map_err(validation)?;
    let dir = if suite_dir.file_name().is_some_and(|n| n.to_string_lossy() == header.suite_id) {
        suite_dir.to_path_buf()
    } else {
        suite_dir.join(&header.suite_id)
    };
    let suite = EvaluationSuite::read_from(&dir).map_err(validation)?;
    let mut grading = suite.grading().map_err(validation)?;
    config.apply_grading(&mut grading);
    let session = Session::replay(&header, &records, Arc::new(suite), ont, grading).map_err(validation)?;
    Ok(session.score())
}

fn read_score(path: &Path) -> Result<ScoreReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| validation(format!("{}: {e}", path.display())))?;
    if let Ok(summary) = serde_json::from_str::<ClientRunSummary>(&text) {
        return Ok(summary.score);
    }
    serde_json::from_str(&text).map_err(|e| validation(format!("{}: {e}", path.display())))
}
