use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::{data_path, fold_report, tags, ExperimentConfig, HistoryEntry, Outcome, Source, Stopwatch, NN, NN_FEDERATED};
use crate::baselines::{random_search, Candidate, Family, HpoBudget, SearchOutcome};
use crate::data::mno::FEATURES;
use crate::data::{load_mno, split, synth_mno, LabeledTable, MnoEncoder};
use crate::eval::{r_squared, FoldScore, MetricsReport};
use crate::fl::{run_federated, ClientDataset};
use crate::nn::{build_model, forward, InputKind, Mode, ModelSpec, ParamVector};
use crate::rng::derive;
use crate::train::train;
use crate::{Error, Result};

/// Number of users drawn when `data.users` is not set; gives about 50k rows.
const DEFAULT_USERS: usize = 1250;

struct Splits {
    train: LabeledTable,
    val: LabeledTable,
    test: LabeledTable,
    enc: MnoEncoder,
}

fn test_r2(spec: &ModelSpec, params: &ParamVector, s: &Splits) -> Result<f64> {
    let pred: Vec<f64> = forward(spec, params, &s.enc.encode(&s.test)?, Mode::Infer)?
        .column0()
        .into_iter()
        .map(|v| s.enc.unscale_target(v))
        .collect();
    r_squared(&s.test.targets()?, &pred)
}

fn baseline(cfg: &ExperimentConfig, s: &Splits, family: Family, iterations: usize) -> Result<(MetricsReport, HistoryEntry)> {
    let d = FEATURES.len();
    let (tx, ty) = (s.enc.features(&s.train)?, s.train.targets()?);
    let (vx, vy) = (s.enc.features(&s.val)?, s.val.targets()?);
    let fit_seed = derive(cfg.seed, &[tags::FIT, family as u64]);
    let evaluate = |c: &Candidate| {
        let fitted = family.model(c)?.fit(&tx, d, &ty, fit_seed)?;
        r_squared(&vy, &fitted.predict(&vx)?)
    };
    let space = family.default_space();
    let outcome = if space.params.is_empty() {
        let best = Candidate::new();
        let score = evaluate(&best)?;
        SearchOutcome {
            best: best.clone(),
            best_score: score,
            log: vec![(best, score)],
        }
    } else {
        random_search(
            &space,
            HpoBudget { iterations },
            derive(cfg.seed, &[tags::HPO, family as u64]),
            evaluate,
        )?
    };
    let fitted = family.model(&outcome.best)?.fit(&tx, d, &ty, fit_seed)?;
    let r2 = r_squared(&s.test.targets()?, &fitted.predict(&s.enc.features(&s.test)?)?)?;
    let mut report = fold_report(family.name(), vec![FoldScore::Regression { r2 }])?;
    report.hyperparameters = outcome.best.clone();
    Ok((
        report,
        HistoryEntry::Search {
            model: family.name().into(),
            best: outcome.best,
            best_score: outcome.best_score,
            log: outcome.log,
        },
    ))
}

pub(crate) fn run(cfg: &ExperimentConfig, base_dir: &Path, watch: &mut Stopwatch) -> Result<Outcome> {
    let table = match cfg.data.source {
        Source::Synthetic => synth_mno(cfg.data.users.unwrap_or(DEFAULT_USERS), cfg.data.seed.unwrap_or(cfg.seed))?,
        Source::File => load_mno(&data_path(cfg, base_dir)?)?,
    };
    let shares = cfg.eval.splits.expect("validated");
    let parts = split(table.len(), &shares, derive(cfg.seed, &[tags::SPLIT]), true)?;
    let train_table = table.select_rows(&parts[0]);
    let s = Splits {
        enc: MnoEncoder::fit(&train_table)?,
        train: train_table,
        val: table.select_rows(&parts[1]),
        test: table.select_rows(&parts[2]),
    };
    if let Some(spec) = &cfg.model {
        if spec.input() != (InputKind::Flat { dim: FEATURES.len() }) {
            return Err(Error::Config(format!(
                "model input {:?} does not match the {} MNO features",
                spec.input(),
                FEATURES.len()
            )));
        }
    }
    watch.lap("load");

    let mut reports = Vec::new();
    let mut history = Vec::new();
    if let Some(section) = cfg.train {
        let spec = cfg.model.as_ref().expect("validated");
        let init = build_model(spec, derive(cfg.seed, &[tags::INIT]));
        let tc = section.to_config(derive(cfg.seed, &[tags::TRAIN]));
        let (params, epochs) = train(spec, &init, &s.enc.encode(&s.train)?, Some(&s.enc.encode(&s.val)?), &tc)?;
        let r2 = test_r2(spec, &params, &s)?;
        reports.push(fold_report(NN, vec![FoldScore::Regression { r2 }])?);
        history.push(HistoryEntry::Epochs {
            model: NN.into(),
            fold: 0,
            epochs,
        });
        watch.lap("centralized");
    }
    if let Some(section) = cfg.federated {
        let spec = cfg.model.as_ref().expect("validated");
        let mut val_parts: BTreeMap<String, LabeledTable> = s.val.partition_by("provider")?.into_iter().collect();
        let clients = s
            .train
            .partition_by("provider")?
            .into_iter()
            .map(|(key, part)| {
                let eval = val_parts.remove(&key).map(|v| s.enc.encode(&v)).transpose()?;
                Ok(ClientDataset {
                    train: s.enc.encode(&part)?,
                    eval,
                    key,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let init = build_model(spec, derive(cfg.seed, &[tags::INIT]));
        let plan = section.to_plan(derive(cfg.seed, &[tags::FEDERATED]));
        let (params, rounds) = run_federated(spec, &clients, &init, &plan)?;
        let r2 = test_r2(spec, &params, &s)?;
        reports.push(fold_report(NN_FEDERATED, vec![FoldScore::Regression { r2 }])?);
        history.push(HistoryEntry::Rounds {
            model: NN_FEDERATED.into(),
            fold: 0,
            rounds,
        });
        watch.lap("federated");
    }
    if let Some(b) = &cfg.baselines {
        for &family in &b.families {
            let (report, hist) = baseline(cfg, &s, family, b.iterations)?;
            reports.push(report);
            history.push(hist);
            watch.lap(family.name());
        }
    }

    let mut notes = BTreeMap::new();
    notes.insert("rows".into(), table.len() as f64);
    let users: BTreeSet<&str> = table.text_column("user_id")?.into_iter().collect();
    notes.insert("users".into(), users.len() as f64);
    for (provider, part) in table.partition_by("provider")? {
        notes.insert(format!("share_provider_{provider}"), part.len() as f64 / table.len() as f64);
    }
    for (name, t) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
        notes.insert(format!("rows_{name}"), t.len() as f64);
    }
    Ok(Outcome {
        reports,
        history,
        notes,
    })
}
