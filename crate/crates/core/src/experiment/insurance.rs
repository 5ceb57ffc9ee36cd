use std::collections::BTreeMap;
use std::path::Path;

use super::{data_path, fold_report, run_folds, tags, ExperimentConfig, HistoryEntry, Outcome, RunMode, Source, Stopwatch, NN, NN_FEDERATED};
use crate::baselines::{fold_scores, random_search, Candidate, Family, HpoBudget};
use crate::data::{kfold, load_insurance, split, synth_insurance, InsuranceEncoder, LabeledTable};
use crate::eval::{r_squared, FoldScore};
use crate::fl::{partition_by_key, run_federated};
use crate::nn::{build_model, forward, Mode, ModelSpec, ParamVector};
use crate::rng::derive;
use crate::train::train;
use crate::{Error, Result};

pub(crate) fn load(cfg: &ExperimentConfig, base_dir: &Path) -> Result<LabeledTable> {
    match cfg.data.source {
        Source::Synthetic => Ok(synth_insurance(cfg.data.seed.unwrap_or(cfg.seed))),
        Source::File => load_insurance(&data_path(cfg, base_dir)?),
    }
}

fn test_r2(spec: &ModelSpec, params: &ParamVector, enc: &InsuranceEncoder, test: &LabeledTable) -> Result<f64> {
    let batch = enc.encode(test)?;
    let pred: Vec<f64> = forward(spec, params, &batch, Mode::Infer)?
        .column0()
        .into_iter()
        .map(|v| enc.unscale_target(v))
        .collect();
    r_squared(&test.targets()?, &pred)
}

fn check_dim(spec: &ModelSpec, enc: &InsuranceEncoder) -> Result<()> {
    let dim = match spec.input() {
        crate::nn::InputKind::Flat { dim } => dim,
        other => return Err(Error::Config(format!("insurance models take flat inputs, not {other:?}"))),
    };
    if dim != enc.feature_dim() {
        return Err(Error::Config(format!(
            "model input dim {dim} does not match the {} encoded insurance features",
            enc.feature_dim()
        )));
    }
    Ok(())
}

/// Centralized network on one fold. `federated_encoding` drops the region
/// block so the network matches the federated one.
fn centralized_fold(
    cfg: &ExperimentConfig,
    table: &LabeledTable,
    (train_rows, test_rows): (&[usize], &[usize]),
    fold: usize,
    federated_encoding: bool,
) -> Result<(FoldScore, HistoryEntry)> {
    let spec = cfg.model.as_ref().expect("validated");
    let section = cfg.train.expect("validated");
    let fold_train = table.select_rows(train_rows);
    let enc = InsuranceEncoder::fit(&fold_train, federated_encoding)?;
    check_dim(spec, &enc)?;
    let (fit_table, val_table) = if cfg.eval.val_fraction > 0.0 {
        let parts = split(
            fold_train.len(),
            &[1.0 - cfg.eval.val_fraction, cfg.eval.val_fraction],
            derive(cfg.seed, &[tags::VAL_SPLIT, fold as u64]),
            true,
        )?;
        (fold_train.select_rows(&parts[0]), Some(fold_train.select_rows(&parts[1])))
    } else {
        (fold_train.clone(), None)
    };
    let data = enc.encode(&fit_table)?;
    let val = val_table.as_ref().map(|t| enc.encode(t)).transpose()?;
    let init = build_model(spec, derive(cfg.seed, &[tags::INIT, fold as u64]));
    let tc = section.to_config(derive(cfg.seed, &[tags::TRAIN, fold as u64]));
    let (params, epochs) = train(spec, &init, &data, val.as_ref(), &tc)?;
    let r2 = test_r2(spec, &params, &enc, &table.select_rows(test_rows))?;
    Ok((
        FoldScore::Regression { r2 },
        HistoryEntry::Epochs {
            model: NN.into(),
            fold,
            epochs,
        },
    ))
}

fn federated_fold(
    cfg: &ExperimentConfig,
    table: &LabeledTable,
    (train_rows, test_rows): (&[usize], &[usize]),
    fold: usize,
) -> Result<(FoldScore, HistoryEntry)> {
    let spec = cfg.model.as_ref().expect("validated");
    let section = cfg.federated.expect("validated");
    let fold_train = table.select_rows(train_rows);
    let enc = InsuranceEncoder::fit(&fold_train, true)?;
    check_dim(spec, &enc)?;
    let clients = partition_by_key(
        &fold_train,
        "region",
        cfg.eval.client_eval_fraction,
        derive(cfg.seed, &[tags::CLIENTS, fold as u64]),
        |t| enc.encode(t),
    )?;
    let init = build_model(spec, derive(cfg.seed, &[tags::INIT, fold as u64]));
    let plan = section.to_plan(derive(cfg.seed, &[tags::FEDERATED, fold as u64]));
    let (params, rounds) = run_federated(spec, &clients, &init, &plan)?;
    let r2 = test_r2(spec, &params, &enc, &table.select_rows(test_rows))?;
    Ok((
        FoldScore::Regression { r2 },
        HistoryEntry::Rounds {
            model: NN_FEDERATED.into(),
            fold,
            rounds,
        },
    ))
}

/// Feature matrix handed to a baseline family. OLS drops the last region
/// dummy, which is collinear with the intercept.
fn family_matrix(family: Family, x: &[f64], d: usize) -> (Vec<f64>, usize) {
    if family == Family::Ols {
        (x.chunks(d).flat_map(|r| r[..d - 1].iter().copied()).collect(), d - 1)
    } else {
        (x.to_vec(), d)
    }
}

fn baseline(
    cfg: &ExperimentConfig,
    table: &LabeledTable,
    folds: &[(Vec<usize>, Vec<usize>)],
    family: Family,
    iterations: usize,
) -> Result<(crate::eval::MetricsReport, HistoryEntry)> {
    let enc = InsuranceEncoder::fit(table, false)?;
    let (x, d) = family_matrix(family, &enc.features(table)?, enc.feature_dim());
    let y = table.targets()?;
    let hpo_folds = kfold(table.len(), cfg.eval.folds, derive(cfg.seed, &[tags::HPO]))?;
    let space = family.default_space();
    let fit_seed = derive(cfg.seed, &[tags::FIT, family as u64]);
    let evaluate = |c: &Candidate| {
        let scores = fold_scores(&family.model(c)?, &x, d, &y, &hpo_folds, fit_seed)?;
        Ok(scores.iter().sum::<f64>() / scores.len() as f64)
    };
    let outcome = if space.params.is_empty() {
        let best = Candidate::new();
        let score = evaluate(&best)?;
        crate::baselines::SearchOutcome {
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
    let model = family.model(&outcome.best)?;
    let scores = run_folds(folds.len(), |fold| {
        let (train_rows, test_rows) = &folds[fold];
        let fold_train = table.select_rows(train_rows);
        let fold_test = table.select_rows(test_rows);
        let enc = InsuranceEncoder::fit(&fold_train, false)?;
        let (tx, d) = family_matrix(family, &enc.features(&fold_train)?, enc.feature_dim());
        let (vx, _) = family_matrix(family, &enc.features(&fold_test)?, enc.feature_dim());
        let fitted = model.fit(&tx, d, &fold_train.targets()?, derive(fit_seed, &[fold as u64]))?;
        Ok(FoldScore::Regression {
            r2: r_squared(&fold_test.targets()?, &fitted.predict(&vx)?)?,
        })
    })?;
    let mut report = fold_report(family.name(), scores)?;
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
    let table = load(cfg, base_dir)?;
    let folds = kfold(table.len(), cfg.eval.folds, derive(cfg.seed, &[tags::FOLDS]))?;
    watch.lap("load");
    let mut reports = Vec::new();
    let mut history = Vec::new();
    let federated_encoding = cfg.mode == RunMode::Federated;

    if cfg.train.is_some() {
        let out = run_folds(folds.len(), |i| {
            centralized_fold(cfg, &table, (&folds[i].0, &folds[i].1), i, federated_encoding)
        })?;
        let (scores, hist): (Vec<_>, Vec<_>) = out.into_iter().unzip();
        reports.push(fold_report(NN, scores)?);
        history.extend(hist);
        watch.lap("centralized");
    }
    if cfg.federated.is_some() {
        let out = run_folds(folds.len(), |i| federated_fold(cfg, &table, (&folds[i].0, &folds[i].1), i))?;
        let (scores, hist): (Vec<_>, Vec<_>) = out.into_iter().unzip();
        reports.push(fold_report(NN_FEDERATED, scores)?);
        history.extend(hist);
        watch.lap("federated");
    }
    if let Some(b) = &cfg.baselines {
        for &family in &b.families {
            let (report, hist) = baseline(cfg, &table, &folds, family, b.iterations)?;
            reports.push(report);
            history.push(hist);
            watch.lap(family.name());
        }
    }
    let mut notes = BTreeMap::new();
    notes.insert("rows".into(), table.len() as f64);
    Ok(Outcome {
        reports,
        history,
        notes,
    })
}
