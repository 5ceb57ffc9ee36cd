use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::baselines::Family;
use crate::fl::FederatedPlan;
use crate::nn::{Head, InputKind, ModelSpec};
use crate::optim::{LrSchedule, OptimizerConfig, OptimizerKind};
use crate::train::{BatchSize, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UseCase {
    Insurance,
    FineDust,
    MnoSynth,
}

impl UseCase {
    pub fn as_str(self) -> &'static str {
        match self {
            UseCase::Insurance => "insurance",
            UseCase::FineDust => "fine_dust",
            UseCase::MnoSynth => "mno_synth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Centralized,
    Federated,
    Baselines,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Centralized => "centralized",
            RunMode::Federated => "federated",
            RunMode::Baselines => "baselines",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Full,
    Desk,
}

impl Scale {
    pub fn as_str(self) -> &'static str {
        match self {
            Scale::Full => "full",
            Scale::Desk => "desk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Seeded stand-in generated in memory.
    #[default]
    Synthetic,
    /// Local file (insurance, MNO) or directory of station files (fine dust).
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub source: Source,
    /// Relative paths are resolved against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Seed of the synthetic generator; defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stations: Option<Vec<String>>,
    /// Leading hours kept per station.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hours: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub users: Option<usize>,
}

impl DataConfig {
    pub fn window(&self) -> usize {
        self.window.unwrap_or(48)
    }

    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(1)
    }
}

/// Centralized training; the run seed fills in [`TrainConfig::seed`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<LrSchedule>,
    pub batch_size: BatchSize,
    /// Keep the weights of the epoch with the lowest validation loss.
    #[serde(default)]
    pub restore_best: bool,
}

impl TrainSection {
    pub fn to_config(self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            optimizer: self.optimizer,
            schedule: self.schedule,
            batch_size: self.batch_size,
            seed,
            restore_best: self.restore_best,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederatedSection {
    pub rounds: usize,
    pub local_epochs: usize,
    pub client_opt: OptimizerConfig,
    pub server_opt: OptimizerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_lr_schedule: Option<LrSchedule>,
    pub batch_size: BatchSize,
}

impl FederatedSection {
    pub fn to_plan(self, seed: u64) -> FederatedPlan {
        FederatedPlan {
            rounds: self.rounds,
            local_epochs: self.local_epochs,
            client_opt: self.client_opt,
            server_opt: self.server_opt,
            client_lr_schedule: self.client_lr_schedule,
            batch_size: self.batch_size,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Cross-validation folds (insurance, fine dust).
    #[serde(default = "EvalConfig::default_folds")]
    pub folds: usize,
    /// Share of centralized training rows held out to monitor training.
    #[serde(default)]
    pub val_fraction: f64,
    /// Share of each client's rows held out to monitor federated rounds.
    #[serde(default)]
    pub client_eval_fraction: f64,
    /// Chronological test tail per station (fine dust).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_fraction: Option<f64>,
    /// Train / validation / test shares (MNO).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<[f64; 3]>,
}

impl EvalConfig {
    fn default_folds() -> usize {
        5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub families: Vec<Family>,
    /// Random-search candidates per family.
    pub iterations: usize,
}

/// Settings replaced when running at desk scale.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stations: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hours: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub users: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

impl DeskOverrides {
    fn is_empty(&self) -> bool {
        *self == DeskOverrides::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub use_case: UseCase,
    pub mode: RunMode,
    pub seed: u64,
    #[serde(default)]
    pub scale: Scale,
    pub data: DataConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub federated: Option<FederatedSection>,
    pub eval: EvalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baselines: Option<BaselineConfig>,
    #[serde(default, skip_serializing_if = "DeskOverrides::is_empty")]
    pub desk: DeskOverrides,
}

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

fn fraction(name: &str, v: f64, lo_inclusive: bool) -> Result<()> {
    let ok = v < 1.0 && if lo_inclusive { v >= 0.0 } else { v > 0.0 };
    if ok {
        Ok(())
    } else {
        bad(format!("{name} = {v} is outside its allowed range"))
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML document; unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies command-line overrides and, at desk scale, the desk settings.
    /// The result carries no desk section, so running it again reproduces
    /// the same run.
    pub fn resolve(&self, scale: Option<Scale>, seed: Option<u64>) -> Result<Self> {
        let mut out = self.clone();
        if let Some(seed) = seed {
            out.seed = seed;
        }
        if let Some(scale) = scale {
            out.scale = scale;
        }
        if out.scale == Scale::Desk {
            let desk = std::mem::take(&mut out.desk);
            if let Some(v) = desk.stations {
                out.data.stations = Some(v);
            }
            if let Some(v) = desk.hours {
                out.data.hours = Some(v);
            }
            if let Some(v) = desk.stride {
                out.data.stride = Some(v);
            }
            if let Some(v) = desk.users {
                out.data.users = Some(v);
            }
            if let (Some(v), Some(b)) = (desk.iterations, out.baselines.as_mut()) {
                b.iterations = v;
            }
        } else {
            out.desk = DeskOverrides::default();
        }
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return bad("name must not be empty");
        }
        let d = &self.data;
        if d.source == Source::File && d.path.is_none() {
            return bad("data.path is required when data.source = \"file\"");
        }
        match self.use_case {
            UseCase::Insurance => {
                if d.stations.is_some() || d.hours.is_some() || d.window.is_some() || d.stride.is_some() || d.users.is_some() {
                    return bad("insurance data accepts only source, path and seed");
                }
                if self.eval.folds < 2 {
                    return bad("eval.folds must be at least 2");
                }
            }
            UseCase::FineDust => {
                if d.window() == 0 || d.stride() == 0 {
                    return bad("data.window and data.stride must be positive");
                }
                if let Some(s) = &d.stations {
                    if s.is_empty() {
                        return bad("data.stations must not be empty");
                    }
                }
                if d.users.is_some() {
                    return bad("data.users applies to the mno_synth use case only");
                }
                if self.eval.folds < 2 {
                    return bad("eval.folds must be at least 2");
                }
                let tf = self.eval.test_fraction.ok_or_else(|| Error::Config("eval.test_fraction is required for fine_dust".into()))?;
                fraction("eval.test_fraction", tf, false)?;
            }
            UseCase::MnoSynth => {
                if d.users.is_some_and(|u| u < 3) {
                    return bad("data.users must be at least 3");
                }
                let s = self.eval.splits.ok_or_else(|| Error::Config("eval.splits is required for mno_synth".into()))?;
                if s.iter().any(|v| !(*v > 0.0)) || (s.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return bad("eval.splits must be three positive shares summing to 1");
                }
            }
        }
        fraction("eval.val_fraction", self.eval.val_fraction, true)?;
        fraction("eval.client_eval_fraction", self.eval.client_eval_fraction, true)?;

        if let Some(t) = &self.train {
            if t.epochs == 0 {
                return bad("train.epochs must be at least 1");
            }
            if t.optimizer.kind == OptimizerKind::FedAdam {
                return bad("train.optimizer: fedadam is a server optimizer");
            }
            t.optimizer.validate()?;
            if let Some(s) = t.schedule {
                s.validate()?;
            }
            if t.batch_size == BatchSize::Fixed(0) {
                return bad("train.batch_size must be positive");
            }
            if t.restore_best && self.eval.val_fraction == 0.0 && self.use_case == UseCase::Insurance {
                return bad("train.restore_best needs eval.val_fraction > 0");
            }
        }
        if let Some(f) = &self.federated {
            if f.rounds == 0 || f.local_epochs == 0 {
                return bad("federated.rounds and federated.local_epochs must both be at least 1");
            }
            if f.batch_size == BatchSize::Fixed(0) {
                return bad("federated.batch_size must be positive");
            }
            f.to_plan(self.seed).validate()?;
        }
        if let Some(b) = &self.baselines {
            if self.use_case == UseCase::FineDust {
                return bad("the fine_dust use case has no shallow baselines");
            }
            if b.families.is_empty() {
                return bad("baselines.families must not be empty");
            }
            if b.iterations == 0 {
                return bad("baselines.iterations must be at least 1");
            }
        }
        let required = match self.mode {
            RunMode::Centralized => self.train.is_some().then_some(()).ok_or("centralized mode needs a [train] section"),
            RunMode::Federated => self.federated.is_some().then_some(()).ok_or("federated mode needs a [federated] section"),
            RunMode::Baselines => self.baselines.is_some().then_some(()).ok_or("baselines mode needs a [baselines] section"),
        };
        required.map_err(|m| Error::Config(m.into()))?;
        if self.mode == RunMode::Centralized && self.federated.is_some() {
            return bad("a [federated] section is only allowed in federated mode");
        }
        if self.mode == RunMode::Baselines && (self.train.is_some() || self.federated.is_some()) {
            return bad("baselines mode takes no [train] or [federated] section");
        }
        if self.train.is_some() || self.federated.is_some() {
            let model = self.model.as_ref().ok_or_else(|| Error::Config("a [model] section is required".into()))?;
            self.check_model(model)?;
        } else if self.model.is_some() {
            return bad("a [model] section needs a [train] or [federated] section");
        }
        Ok(())
    }

    fn check_model(&self, model: &ModelSpec) -> Result<()> {
        match (self.use_case, model.input(), model.head()) {
            (UseCase::Insurance, InputKind::Flat { dim }, Head::Regression { .. }) => {
                // A federated run's centralized reference shares the
                // federated encoding, which leaves region to partitioning.
                let expected = if self.mode == RunMode::Federated { 5 } else { 9 };
                if dim != expected {
                    return bad(format!(
                        "model input dim {dim} does not match the {expected} insurance features of this mode"
                    ));
                }
            }
            (UseCase::MnoSynth, InputKind::Flat { dim }, Head::Regression { .. }) => {
                if dim != crate::data::mno::FEATURES.len() {
                    return bad(format!(
                        "model input dim {dim} does not match the {} MNO features",
                        crate::data::mno::FEATURES.len()
                    ));
                }
            }
            (UseCase::FineDust, InputKind::Sequence { steps, .. }, Head::Classification { classes: 3 }) => {
                if steps != self.data.window() {
                    return bad(format!("model sequence length {steps} differs from data.window {}", self.data.window()));
                }
            }
            (uc, input, head) => {
                return bad(format!(
                    "model with input {input:?} and head {head:?} does not fit the {} use case",
                    uc.as_str()
                ))
            }
        }
        Ok(())
    }
}
