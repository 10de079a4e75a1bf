//! `foresight <subcommand>`: batch front end over the core pipeline.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 for data errors.
//! Every file written embeds the resolved run configuration.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use foresight_core::eval::{self, EvalError, ExperimentReport, FoldOutcome, Tuning};
use foresight_core::examples::{self, label_points, lopo_folds, Example, Task};
use foresight_core::features::{FeatureExtractor, FeatureGroup, FeatureSchema};
use foresight_core::forest;
use foresight_core::recording::Recording;
use foresight_core::synth::{self, GroundTruth};
use foresight_core::mix_seed;
use foresight_core::timeline::summarize;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ConfigError, Overrides, RunConfig};
use crate::io::{corpus_manifests, load_recording, save_recording_with, write_json, IoError};
use crate::report;

#[derive(Parser, Debug)]
#[command(name = "foresight", version, about = "Forecast attention shifts between a phone and the environment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus into --out.
    Synth(Common),
    /// Corpus statistics.
    Stats(Common),
    /// Feature vectors at every reference time of the task.
    Features(Common),
    /// Labeled examples and leave-one-person-out folds.
    Examples(Common),
    /// Tune and train one forest on all balanced examples.
    Train(Common),
    /// Leave-one-person-out evaluation of one feature group.
    Eval(Common),
    /// Evaluation of all four feature groups; generates a corpus when --data is absent.
    Run(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus directory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    #[arg(long, value_parser = parse_group)]
    group: Option<FeatureGroup>,
    /// Seconds.
    #[arg(long)]
    target_window: Option<f64>,
    /// Seconds.
    #[arg(long)]
    stride: Option<f64>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_task(s: &str) -> Result<Task, String> {
    Task::parse(s).ok_or_else(|| format!("expected one of {}", Task::ALL.map(Task::name).join(", ")))
}

fn parse_group(s: &str) -> Result<FeatureGroup, String> {
    FeatureGroup::parse(s).ok_or_else(|| format!("expected one of {}", FeatureGroup::ALL.map(FeatureGroup::name).join(", ")))
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Data(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read(e) => CliError::Io(e),
            ConfigError::Invalid(m) => CliError::Usage(m),
        }
    }
}

impl From<examples::ExampleError> for CliError {
    fn from(e: examples::ExampleError) -> Self {
        CliError::Eval(e.into())
    }
}

impl From<forest::ForestError> for CliError {
    fn from(e: forest::ForestError) -> Self {
        CliError::Eval(e.into())
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let rendered = e.to_string();
            let reason = rendered.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("foresight: {reason}\n");
            eprint!("{}", Cli::command().render_help());
            return 1;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("foresight: {m}\n");
            eprint!("{}", Cli::command().render_help());
            1
        }
        Err(e) => {
            eprintln!("foresight: {e}");
            2
        }
    }
}

type Handler = fn(&RunConfig) -> Result<(), CliError>;

fn dispatch(command: Command) -> Result<(), CliError> {
    let (common, f): (Common, Handler) = match command {
        Command::Synth(c) => (c, cmd_synth),
        Command::Stats(c) => (c, cmd_stats),
        Command::Features(c) => (c, cmd_features),
        Command::Examples(c) => (c, cmd_examples),
        Command::Train(c) => (c, cmd_train),
        Command::Eval(c) => (c, cmd_eval),
        Command::Run(c) => (c, cmd_run),
    };
    let overrides = Overrides {
        data: common.data,
        out: common.out,
        seed: common.seed,
        task: common.task,
        group: common.group,
        target_window: common.target_window,
        stride: common.stride,
        workers: common.workers,
    };
    let cfg = RunConfig::load(common.config.as_deref(), &overrides)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Data(format!("cannot start worker pool: {e}")))?;
    fs::create_dir_all(&cfg.out).map_err(|source| IoError::Io { path: cfg.out.clone(), source })?;
    pool.install(|| f(&cfg))
}

fn with_config<T: Serialize>(cfg: &RunConfig, key: &str, value: &T) -> Value {
    json!({ "config": cfg.to_value(), key: value })
}

fn config_line(prefix: &str, cfg: &RunConfig) -> String {
    format!("{prefix}config {}\n", cfg.to_value())
}

fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

fn load_corpus(cfg: &RunConfig) -> Result<Vec<Recording>, CliError> {
    let dir = cfg.data.as_ref().ok_or_else(|| CliError::Usage("--data (or \"data\" in the config) is required".into()))?;
    let manifests = corpus_manifests(dir)?;
    Ok(manifests.par_iter().map(|m| load_recording(m)).collect::<Result<Vec<_>, _>>()?)
}

fn generate_corpus(cfg: &RunConfig) -> Result<Vec<(Recording, GroundTruth)>, CliError> {
    (0..cfg.synth.n_participants)
        .into_par_iter()
        .map(|i| synth::generate_participant(&cfg.synth, i).map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

/// Corpus from `data`, or generated from the synth settings.
fn corpus(cfg: &RunConfig) -> Result<Vec<Recording>, CliError> {
    if cfg.data.is_some() {
        load_corpus(cfg)
    } else {
        Ok(generate_corpus(cfg)?.into_iter().map(|(r, _)| r).collect())
    }
}

/// Examples of every recording, extracted in parallel, in recording order.
fn prepare(recs: &[Recording], cfg: &RunConfig, group: FeatureGroup) -> Result<Vec<Example>, CliError> {
    let task = cfg.task_config();
    // Checks the configuration and that all recordings share their constants.
    let heads: Vec<Recording> = recs.iter().map(|r| Recording { config: r.config.clone(), ..Recording::empty(r.participant_id.clone()) }).collect();
    eval::prepare(&heads, &task, group)?;
    let parts = recs
        .par_iter()
        .map(|r| examples::generate_with(&FeatureExtractor::new(r), r, &task, group))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(parts.into_iter().flatten().collect())
}

fn experiment(recs: &[Recording], cfg: &RunConfig, group: FeatureGroup) -> Result<ExperimentReport, CliError> {
    let examples = prepare(recs, cfg, group)?;
    let folds = lopo_folds(&examples)?;
    let tuning = cfg.grid.resolve(examples.first().map_or(0, |e| e.features.len()));
    let outcomes: Vec<FoldOutcome> = folds
        .par_iter()
        .map(|f| eval::evaluate_fold(&examples, f, &tuning, cfg.seed))
        .collect::<Result<_, _>>()?;
    Ok(eval::assemble(&examples, &cfg.task_config(), group, cfg.seed, outcomes))
}

fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    let corpus = generate_corpus(cfg)?;
    let provenance = json!({ "config": cfg.to_value() });
    corpus.par_iter().try_for_each(|(rec, truth)| -> Result<(), IoError> {
        let dir = cfg.out.join(&rec.participant_id);
        save_recording_with(rec, &dir, Some(&provenance))?;
        write_json(&dir.join("ground_truth.json"), &with_config(cfg, "ground_truth", truth))
    })?;
    println!("wrote {} recordings to {}", corpus.len(), cfg.out.display());
    Ok(())
}

fn cmd_stats(cfg: &RunConfig) -> Result<(), CliError> {
    let recs = load_corpus(cfg)?;
    let stats = summarize(&recs);
    write_json(&cfg.out.join("stats.json"), &with_config(cfg, "stats", &stats))?;
    let text = config_line("", cfg) + "\n" + &report::stats_text(&stats);
    write_text(&cfg.out.join("stats.txt"), &text)?;
    print!("{}", report::stats_text(&stats));
    Ok(())
}

#[derive(Serialize)]
struct Header<'a> {
    config: Value,
    group: FeatureGroup,
    features: &'a [String],
}

fn schema_of(recs: &[Recording], group: FeatureGroup) -> Result<FeatureSchema, CliError> {
    let first = recs.first().ok_or_else(|| CliError::Data("corpus is empty".into()))?;
    Ok(FeatureSchema::new(&first.config, group))
}

fn json_line<T: Serialize>(out: &mut String, v: &T) {
    out.push_str(&serde_json::to_string(v).expect("record serializes"));
    out.push('\n');
}

fn cmd_features(cfg: &RunConfig) -> Result<(), CliError> {
    let recs = load_corpus(cfg)?;
    let schema = schema_of(&recs, cfg.group)?;
    let task = cfg.task_config();
    let heads: Vec<Recording> = recs.iter().map(|r| Recording { config: r.config.clone(), ..Recording::empty(r.participant_id.clone()) }).collect();
    eval::prepare(&heads, &task, cfg.group)?;
    let mut out = String::new();
    json_line(&mut out, &Header { config: cfg.to_value(), group: cfg.group, features: &schema.names });
    let chunks: Vec<String> = recs
        .par_iter()
        .map(|rec| {
            let ex = FeatureExtractor::new(rec);
            let mut s = String::new();
            for p in label_points(rec, &task) {
                if let Ok(fv) = ex.extract(p.t_ref - task.feature_window, p.t_ref, cfg.group) {
                    json_line(&mut s, &json!({ "participant_id": rec.participant_id, "t_ref": p.t_ref, "values": fv.values }));
                }
            }
            s
        })
        .collect();
    chunks.iter().for_each(|c| out.push_str(c));
    write_text(&cfg.out.join("features.jsonl"), &out)?;
    println!("wrote features.jsonl ({} features)", schema.len());
    Ok(())
}

#[derive(Serialize)]
struct ExampleRecord<'a> {
    participant_id: &'a str,
    t_ref: f64,
    label: bool,
    segment_kind: foresight_core::recording::SegmentKind,
    environment: foresight_core::recording::Environment,
    values: &'a [f64],
}

fn cmd_examples(cfg: &RunConfig) -> Result<(), CliError> {
    let recs = load_corpus(cfg)?;
    let examples = prepare(&recs, cfg, cfg.group)?;
    let schema = schema_of(&recs, cfg.group)?;
    let mut out = String::new();
    json_line(&mut out, &Header { config: cfg.to_value(), group: cfg.group, features: &schema.names });
    for e in &examples {
        json_line(
            &mut out,
            &ExampleRecord {
                participant_id: &e.participant_id,
                t_ref: e.t_ref,
                label: e.label,
                segment_kind: e.segment_kind,
                environment: e.environment,
                values: &e.features.values,
            },
        );
    }
    write_text(&cfg.out.join("examples.jsonl"), &out)?;
    let folds: Vec<Value> = lopo_folds(&examples)?
        .iter()
        .map(|f| {
            let positives = f.test.iter().filter(|&&i| examples[i].label).count();
            json!({ "participant": f.participant, "n_train": f.train.len(), "n_test": f.test.len(), "test_positives": positives, "test": f.test })
        })
        .collect();
    write_json(&cfg.out.join("folds.json"), &with_config(cfg, "folds", &folds))?;
    let pos = examples.iter().filter(|e| e.label).count();
    println!("wrote {} examples ({pos} positive) and {} folds", examples.len(), folds.len());
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let recs = load_corpus(cfg)?;
    let examples = prepare(&recs, cfg, cfg.group)?;
    let labels: Vec<bool> = examples.iter().map(|e| e.label).collect();
    let keep = examples::balance_indices(&labels, mix_seed(cfg.seed, 0))?;
    let train: Vec<&Example> = keep.iter().map(|&i| &examples[i]).collect();
    let tuning: Tuning = cfg.grid.resolve(train.first().map_or(0, |e| e.features.len()));
    let hp = forest::tune_refs(&train, &tuning.grid, tuning.inner_folds, mix_seed(cfg.seed, 1))?;
    let model = forest::train_refs(&train, &hp, mix_seed(cfg.seed, 2))?;
    write_json(&cfg.out.join("model.json"), &with_config(cfg, "forest", &model))?;
    println!("trained {} trees on {} examples: max_depth {}, min_samples_leaf {}, {} features per split", hp.n_trees, train.len(), hp.max_depth, hp.min_samples_leaf, hp.n_features_per_split);
    Ok(())
}

fn write_reports(cfg: &RunConfig, stem: &str, reports: &[ExperimentReport]) -> Result<(), CliError> {
    let json = if let [r] = reports { with_config(cfg, "report", r) } else { with_config(cfg, "reports", &reports) };
    write_json(&cfg.out.join(format!("{stem}.json")), &json)?;
    let mut text = config_line("", cfg);
    for r in reports {
        let _ = write!(text, "\n{}", report::experiment_text(r));
    }
    if reports.len() > 1 {
        let _ = write!(text, "\n{}", report::run_text(reports));
    }
    write_text(&cfg.out.join(format!("{stem}.txt")), &text)?;
    let csv = config_line("# ", cfg) + &report::confusion_csv(reports);
    write_text(&cfg.out.join("confusion.csv"), &csv)?;
    Ok(())
}

fn cmd_eval(cfg: &RunConfig) -> Result<(), CliError> {
    let recs = load_corpus(cfg)?;
    let r = experiment(&recs, cfg, cfg.group)?;
    write_reports(cfg, "report", std::slice::from_ref(&r))?;
    print!("{}", report::run_text(std::slice::from_ref(&r)));
    Ok(())
}

fn cmd_run(cfg: &RunConfig) -> Result<(), CliError> {
    let recs = corpus(cfg)?;
    let reports = FeatureGroup::ALL.iter().map(|&g| experiment(&recs, cfg, g)).collect::<Result<Vec<_>, _>>()?;
    write_reports(cfg, "run_report", &reports)?;
    print!("{}", report::run_text(&reports));
    Ok(())
}
