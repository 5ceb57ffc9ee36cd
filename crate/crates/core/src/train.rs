//! The epoch loop shared by centralized training and client local updates.

use std::fmt;
use std::ops::Range;

use rand::seq::SliceRandom;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::nn::{loss, loss_and_gradient, Batch, Mode, ModelSpec, ParamVector};
use crate::optim::{schedule_lr, LrSchedule, OptimizerConfig, OptimizerState};
use crate::{rng, Error, Result};

/// Mini-batch size, either a fixed count or the whole dataset. In config
/// files this is an integer or the string `"full"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Fixed(usize),
}

impl Serialize for BatchSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BatchSize::Full => s.serialize_str("full"),
            BatchSize::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = BatchSize;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive integer or \"full\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<BatchSize, E> {
                if v == 0 {
                    return Err(E::custom("batch size must be positive"));
                }
                Ok(BatchSize::Fixed(v as usize))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<BatchSize, E> {
                if v <= 0 {
                    return Err(E::custom("batch size must be positive"));
                }
                Ok(BatchSize::Fixed(v as usize))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<BatchSize, E> {
                match v {
                    "full" => Ok(BatchSize::Full),
                    other => Err(E::custom(format!("unknown batch size {other:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub schedule: Option<LrSchedule>,
    pub batch_size: BatchSize,
    #[serde(default)]
    pub seed: u64,
    /// Return the parameters of the epoch with the lowest validation loss
    /// instead of the last epoch's. Needs a validation batch.
    #[serde(default)]
    pub restore_best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Runs the global epochs in `epochs` over `data`, updating `params` and
/// `opt` in place. Epoch indices are global so the schedule and the shuffle
/// streams continue across calls. Returns the mean training loss per epoch.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_epochs(
    spec: &ModelSpec,
    params: &mut ParamVector,
    data: &Batch,
    opt: &mut OptimizerState,
    schedule: Option<&LrSchedule>,
    batch_size: BatchSize,
    epochs: Range<usize>,
    seed: u64,
) -> Result<Vec<(usize, f64, f64)>> {
    let n = data.len();
    let mut out = Vec::with_capacity(epochs.len());
    for epoch in epochs {
        let lr = schedule.map_or(opt.config.lr, |s| schedule_lr(s, epoch));
        let mut epoch_loss = 0.0;
        match batch_size {
            BatchSize::Fixed(b) if b < n => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng::stream(seed, &[0xE9, epoch as u64]));
                for (step, rows) in order.chunks(b).enumerate() {
                    let mb = data.subset(rows)?;
                    let mode = Mode::Train {
                        seed: rng::derive(seed, &[epoch as u64, step as u64]),
                    };
                    let (l, g) = loss_and_gradient(spec, params, &mb, mode)?;
                    opt.apply(params.values_mut(), g.values(), lr)?;
                    epoch_loss += l * rows.len() as f64;
                }
            }
            _ => {
                let mode = Mode::Train {
                    seed: rng::derive(seed, &[epoch as u64, 0]),
                };
                let (l, g) = loss_and_gradient(spec, params, data, mode)?;
                opt.apply(params.values_mut(), g.values(), lr)?;
                epoch_loss += l * n as f64;
            }
        }
        out.push((epoch, lr, epoch_loss / n as f64));
    }
    if !params.is_finite() {
        return Err(Error::Data("training diverged to non-finite parameters".into()));
    }
    Ok(out)
}

/// Centralized training from `init`. The validation batch, when given, is
/// only evaluated for the history and never trained on.
pub fn train(
    spec: &ModelSpec,
    init: &ParamVector,
    data: &Batch,
    val: Option<&Batch>,
    cfg: &TrainConfig,
) -> Result<(ParamVector, Vec<EpochRecord>)> {
    cfg.optimizer.validate()?;
    let mut params = init.clone();
    let mut opt = OptimizerState::new(cfg.optimizer, params.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, ParamVector)> = None;
    for epoch in 0..cfg.epochs {
        let rec = run_epochs(
            spec,
            &mut params,
            data,
            &mut opt,
            cfg.schedule.as_ref(),
            cfg.batch_size,
            epoch..epoch + 1,
            cfg.seed,
        )?;
        let (epoch, lr, train_loss) = rec[0];
        let val_loss = val.map(|v| loss(spec, &params, v, Mode::Infer)).transpose()?;
        if let (true, Some(v)) = (cfg.restore_best, val_loss) {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, params.clone()));
            }
        }
        history.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
        });
    }
    if let Some((_, p)) = best {
        params = p;
    }
    Ok((params, history))
}
