//! Declarative experiment configs and the runners that turn them into
//! report files.

mod config;
mod fine_dust;
mod insurance;
mod mno;

pub use config::{
    BaselineConfig, DataConfig, DeskOverrides, EvalConfig, ExperimentConfig, FederatedSection, RunMode, Scale, Source,
    TrainSection, UseCase,
};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::Candidate;
use crate::eval::{assign_relative_loss, render_markdown, FoldScore, MetricsReport};
use crate::fl::RoundHistory;
use crate::train::EpochRecord;
use crate::{par, Error, Result};

pub const NN: &str = "neural network";
pub const NN_FEDERATED: &str = "neural network (federated)";

/// Everything written to `metrics.*`. Contains no timings, so identical
/// configs and seeds give identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub name: String,
    pub use_case: UseCase,
    pub mode: RunMode,
    pub scale: Scale,
    pub seed: u64,
    pub reports: Vec<MetricsReport>,
    /// Dataset facts such as row counts, class thresholds and shares.
    pub notes: BTreeMap<String, f64>,
}

impl RunMetrics {
    pub fn report(&self, model: &str) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.model == model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HistoryEntry {
    Epochs {
        model: String,
        fold: usize,
        epochs: Vec<EpochRecord>,
    },
    Rounds {
        model: String,
        fold: usize,
        rounds: RoundHistory,
    },
    Search {
        model: String,
        best: Candidate,
        best_score: f64,
        log: Vec<(Candidate, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    pub seed: u64,
    pub scale: Scale,
    pub threads: usize,
    pub parallel: bool,
    pub started_at: String,
    pub config_path: Option<PathBuf>,
    /// Wall-clock seconds per stage, in execution order.
    pub timings: Vec<(String, f64)>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub metrics: RunMetrics,
    pub history: Vec<HistoryEntry>,
    pub manifest: Manifest,
}

/// Stage timer for the manifest.
pub(crate) struct Stopwatch {
    start: Instant,
    last: Instant,
    pub(crate) stages: Vec<(String, f64)>,
}

impl Stopwatch {
    fn new() -> Self {
        let now = Instant::now();
        Stopwatch {
            start: now,
            last: now,
            stages: Vec::new(),
        }
    }

    pub(crate) fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages.push((stage.to_string(), (now - self.last).as_secs_f64()));
        self.last = now;
    }
}

/// What a use-case runner hands back.
pub(crate) struct Outcome {
    pub(crate) reports: Vec<MetricsReport>,
    pub(crate) history: Vec<HistoryEntry>,
    pub(crate) notes: BTreeMap<String, f64>,
}

/// Runs `f` for each fold in parallel, attaching the fold index to errors.
pub(crate) fn run_folds<T, F>(k: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    par::try_map_indexed(k, |i| {
        f(i).map_err(|e| Error::Fold {
            fold: i,
            source: Box::new(e),
        })
    })
}

pub(crate) fn fold_report(model: &str, folds: Vec<FoldScore>) -> Result<MetricsReport> {
    MetricsReport::from_folds(model, folds)
}

/// Seed tags; every random stream of a run is derived from the run seed and
/// one of these.
pub(crate) mod tags {
    pub const FOLDS: u64 = 1;
    pub const INIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const VAL_SPLIT: u64 = 4;
    pub const CLIENTS: u64 = 5;
    pub const FEDERATED: u64 = 6;
    pub const HPO: u64 = 7;
    pub const FIT: u64 = 8;
    pub const SPLIT: u64 = 9;
}

/// Resolves a data path against the directory of the config file.
pub(crate) fn data_path(cfg: &ExperimentConfig, base_dir: &Path) -> Result<PathBuf> {
    let path = cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| Error::Config("data.path is required when data.source = \"file\"".into()))?;
    Ok(if path.is_absolute() { path.clone() } else { base_dir.join(path) })
}

/// Runs a resolved config. `base_dir` anchors relative data paths.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let started_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let mut watch = Stopwatch::new();
    let mut outcome = match cfg.use_case {
        UseCase::Insurance => insurance::run(cfg, base_dir, &mut watch)?,
        UseCase::FineDust => fine_dust::run(cfg, base_dir, &mut watch)?,
        UseCase::MnoSynth => mno::run(cfg, base_dir, &mut watch)?,
    };
    assign_relative_loss(&mut outcome.reports)?;
    let total_seconds = watch.start.elapsed().as_secs_f64();
    Ok(RunOutput {
        config: cfg.clone(),
        metrics: RunMetrics {
            name: cfg.name.clone(),
            use_case: cfg.use_case,
            mode: cfg.mode,
            scale: cfg.scale,
            seed: cfg.seed,
            reports: outcome.reports,
            notes: outcome.notes,
        },
        history: outcome.history,
        manifest: Manifest {
            name: cfg.name.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            scale: cfg.scale,
            threads: par::current_threads(),
            parallel: par::is_parallel(),
            started_at,
            config_path: None,
            timings: watch.stages,
            total_seconds,
        },
    })
}

/// Loads, resolves and runs a config file.
pub fn run_config_file(path: &Path, scale: Option<Scale>, seed: Option<u64>) -> Result<RunOutput> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg = ExperimentConfig::from_toml_str(&text)
        .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))?
        .resolve(scale, seed)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = run_experiment(&cfg, base)?;
    out.manifest.config_path = Some(path.to_path_buf());
    Ok(out)
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn metrics_markdown(metrics: &RunMetrics) -> String {
    let mut md = format!(
        "# {}\n\nuse case: {}, mode: {}, scale: {}, seed: {}\n\n",
        metrics.name,
        metrics.use_case.as_str(),
        metrics.mode.as_str(),
        metrics.scale.as_str(),
        metrics.seed
    );
    md.push_str(&render_markdown(&metrics.reports));
    if !metrics.notes.is_empty() {
        md.push_str("\n| note | value |\n|---|---|\n");
        for (k, v) in &metrics.notes {
            md.push_str(&format!("| {k} | {v} |\n"));
        }
    }
    md
}

/// Writes `metrics.json`, `metrics.md`, `history.json`,
/// `resolved_config.toml` and `manifest.json` into `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = write_metrics(&out.metrics, dir)?;
    written.extend([
        write(dir.join("history.json"), &pretty(&out.history)?)?,
        write(dir.join("resolved_config.toml"), &out.config.to_toml_string()?)?,
        write(dir.join("manifest.json"), &pretty(&out.manifest)?)?,
    ]);
    Ok(written)
}

/// Writes `metrics.json` and `metrics.md` into `dir`.
pub fn write_metrics(metrics: &RunMetrics, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(vec![
        write(dir.join("metrics.json"), &pretty(metrics)?)?,
        write(dir.join("metrics.md"), &metrics_markdown(metrics))?,
    ])
}

pub fn read_metrics(dir: &Path) -> Result<RunMetrics> {
    let path = dir.join("metrics.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Merges the reports of several runs of one use case and recomputes the
/// relative loss against the best row of the merged set.
pub fn merge_reports(runs: &[RunMetrics]) -> Result<Vec<MetricsReport>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Comparison("report needs at least one run".into()))?;
    if let Some(other) = runs.iter().find(|r| r.use_case != first.use_case) {
        return Err(Error::Comparison(format!(
            "cannot compare use cases {} and {}",
            first.use_case.as_str(),
            other.use_case.as_str()
        )));
    }
    let mut reports: Vec<MetricsReport> = Vec::new();
    for run in runs {
        for r in &run.reports {
            let mut r = r.clone();
            if reports.iter().any(|x| x.model == r.model) {
                r.model = format!("{} [{}]", r.model, run.name);
            }
            reports.push(r);
        }
    }
    assign_relative_loss(&mut reports)?;
    Ok(reports)
}
