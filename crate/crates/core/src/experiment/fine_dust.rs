use std::collections::BTreeMap;
use std::path::Path;

use super::{data_path, fold_report, run_folds, tags, ExperimentConfig, HistoryEntry, Outcome, Source, Stopwatch, NN, NN_FEDERATED};
use crate::data::airq::{wd_levels, REFERENCE_HOURS, STATIONS, WEATHER};
use crate::data::{
    fit_class_thresholds, interpolate_missing, kfold_blocked, load_air_quality, make_windows, select_features_airq,
    synth_air_quality, ScalerParams,
};
use crate::eval::{classification_metrics, FoldScore};
use crate::fl::{run_federated, ClientDataset};
use crate::nn::{build_model, forward, Batch, InputKind, Mode, ModelSpec, ParamVector};
use crate::rng::derive;
use crate::train::train;
use crate::{par, Error, Result};

/// One station: its training windows (chronologically first) and its test
/// windows (the tail).
struct StationWindows {
    station: String,
    train: Batch,
    test: Batch,
}

fn prepare(cfg: &ExperimentConfig, base_dir: &Path, notes: &mut BTreeMap<String, f64>) -> Result<Vec<StationWindows>> {
    let names: Vec<String> = match &cfg.data.stations {
        Some(s) => s.clone(),
        None => STATIONS.iter().map(|s| s.to_string()).collect(),
    };
    if let Some(bad) = names.iter().find(|n| !STATIONS.contains(&n.as_str())) {
        return Err(Error::Config(format!("unknown station {bad:?}")));
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let raw = match cfg.data.source {
        Source::Synthetic => synth_air_quality(
            cfg.data.seed.unwrap_or(cfg.seed),
            &refs,
            cfg.data.hours.unwrap_or(REFERENCE_HOURS),
        ),
        Source::File => {
            let loaded = load_air_quality(&data_path(cfg, base_dir)?, &refs)?;
            match cfg.data.hours {
                Some(h) => loaded.iter().map(|s| s.truncate(h)).collect(),
                None => loaded,
            }
        }
    };
    let cells: usize = raw.iter().map(|s| s.len() * (s.numeric.len() + 1)).sum();
    let missing: usize = raw.iter().map(|s| s.missing_cells()).sum();
    let filled = par::try_map_slice(&raw, interpolate_missing)?;
    let levels = wd_levels(&filled);
    let features = par::try_map_slice(&filled, |s| select_features_airq(s, &levels))?;

    let all_pm: Vec<f64> = features.iter().flat_map(|f| f.pm25.iter().copied()).collect();
    let thresholds = fit_class_thresholds(&all_pm)?;
    let shares = thresholds.shares(&all_pm);

    let window = cfg.data.window();
    let stride = cfg.data.stride();
    let dim = features[0].dim();
    let spec = cfg.model.as_ref().expect("validated");
    match spec.input() {
        InputKind::Sequence { steps, features } if steps == window && features == dim => {}
        other => {
            return Err(Error::Config(format!(
                "model input {other:?} does not match {window}-hour windows of {dim} features"
            )))
        }
    }

    let test_fraction = cfg.eval.test_fraction.expect("validated");
    let mut segments = Vec::with_capacity(features.len());
    for f in &features {
        let n_test = (test_fraction * f.len() as f64).round() as usize;
        let n_train = f.len() - n_test;
        segments.push((f.slice(0..n_train), f.slice(n_train..f.len())));
    }
    let train_weather: Vec<f64> = segments.iter().flat_map(|(tr, _)| tr.weather_matrix()).collect();
    let scaler = ScalerParams::fit(&train_weather, WEATHER.len())?;
    let stations = par::try_map_slice(&segments, |(tr, te)| {
        let (mut tr, mut te) = (tr.clone(), te.clone());
        tr.scale_weather(&scaler);
        te.scale_weather(&scaler);
        Ok(StationWindows {
            station: tr.station.clone(),
            train: make_windows(&tr, &thresholds, window, stride)?,
            test: make_windows(&te, &thresholds, window, stride)?,
        })
    })?;

    notes.insert("stations".into(), stations.len() as f64);
    notes.insert("hours_per_station".into(), features[0].len() as f64);
    notes.insert("missing_cell_rate".into(), missing as f64 / cells as f64);
    notes.insert("threshold_low".into(), thresholds.low);
    notes.insert("threshold_high".into(), thresholds.high);
    notes.insert("share_low".into(), shares[0]);
    notes.insert("share_medium".into(), shares[1]);
    notes.insert("share_high".into(), shares[2]);
    notes.insert("windows_train".into(), stations.iter().map(|s| s.train.len()).sum::<usize>() as f64);
    notes.insert("windows_test".into(), stations.iter().map(|s| s.test.len()).sum::<usize>() as f64);
    Ok(stations)
}

/// Blocked fold `fold` of one station's training windows. Training windows
/// that share hours with the validation block are purged.
fn station_fold(windows: &Batch, folds: usize, fold: usize, window: usize, stride: usize) -> Result<(Batch, Batch)> {
    let (train_idx, val_idx) = kfold_blocked(windows.len(), folds)?.swap_remove(fold);
    let gap = window.div_ceil(stride);
    let (start, end) = (val_idx[0], val_idx[val_idx.len() - 1] + 1);
    let kept: Vec<usize> = train_idx
        .into_iter()
        .filter(|&i| (i < start && start - i >= gap) || (i >= end && i + 1 - end >= gap))
        .collect();
    if kept.is_empty() {
        return Err(Error::Data("purging left no training windows".into()));
    }
    Ok((windows.subset(&kept)?, windows.subset(&val_idx)?))
}

fn score(spec: &ModelSpec, params: &ParamVector, test: &Batch) -> Result<FoldScore> {
    let pred = forward(spec, params, test, Mode::Infer)?.argmax();
    let truth = test.labels().ok_or_else(|| Error::Data("test windows carry no class labels".into()))?;
    Ok(FoldScore::Classification(classification_metrics(truth, &pred, 3)?))
}

pub(crate) fn run(cfg: &ExperimentConfig, base_dir: &Path, watch: &mut Stopwatch) -> Result<Outcome> {
    let mut notes = BTreeMap::new();
    let stations = prepare(cfg, base_dir, &mut notes)?;
    let spec = cfg.model.as_ref().expect("validated");
    let tests: Vec<&Batch> = stations.iter().map(|s| &s.test).collect();
    let test = Batch::concat(&tests)?;
    let (window, stride, k) = (cfg.data.window(), cfg.data.stride(), cfg.eval.folds);
    watch.lap("load");

    let fold_data = |fold: usize| -> Result<Vec<(Batch, Batch)>> {
        stations
            .iter()
            .map(|s| station_fold(&s.train, k, fold, window, stride))
            .collect()
    };

    let mut reports = Vec::new();
    let mut history = Vec::new();
    if let Some(section) = cfg.train {
        let out = run_folds(k, |fold| {
            let parts = fold_data(fold)?;
            let data = Batch::concat(&parts.iter().map(|p| &p.0).collect::<Vec<_>>())?;
            let val = Batch::concat(&parts.iter().map(|p| &p.1).collect::<Vec<_>>())?;
            let init = build_model(spec, derive(cfg.seed, &[tags::INIT, fold as u64]));
            let tc = section.to_config(derive(cfg.seed, &[tags::TRAIN, fold as u64]));
            let (params, epochs) = train(spec, &init, &data, Some(&val), &tc)?;
            Ok((
                score(spec, &params, &test)?,
                HistoryEntry::Epochs {
                    model: NN.into(),
                    fold,
                    epochs,
                },
            ))
        })?;
        let (scores, hist): (Vec<_>, Vec<_>) = out.into_iter().unzip();
        reports.push(fold_report(NN, scores)?);
        history.extend(hist);
        watch.lap("centralized");
    }
    if let Some(section) = cfg.federated {
        let out = run_folds(k, |fold| {
            let clients: Vec<ClientDataset> = fold_data(fold)?
                .into_iter()
                .zip(&stations)
                .map(|((train, eval), s)| ClientDataset {
                    key: s.station.clone(),
                    train,
                    eval: Some(eval),
                })
                .collect();
            let init = build_model(spec, derive(cfg.seed, &[tags::INIT, fold as u64]));
            let plan = section.to_plan(derive(cfg.seed, &[tags::FEDERATED, fold as u64]));
            let (params, rounds) = run_federated(spec, &clients, &init, &plan)?;
            Ok((
                score(spec, &params, &test)?,
                HistoryEntry::Rounds {
                    model: NN_FEDERATED.into(),
                    fold,
                    rounds,
                },
            ))
        })?;
        let (scores, hist): (Vec<_>, Vec<_>) = out.into_iter().unzip();
        reports.push(fold_report(NN_FEDERATED, scores)?);
        history.extend(hist);
        watch.lap("federated");
    }
    Ok(Outcome {
        reports,
        history,
        notes,
    })
}
