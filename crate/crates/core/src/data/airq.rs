//! Hourly multi-station air-quality and weather series.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scaler::ScalerParams;
use crate::nn::{Batch, Inputs, Targets};
use crate::{par, rng, Error, Result};

pub const STATIONS: [&str; 12] = [
    "Aotizhongxin",
    "Changping",
    "Dingling",
    "Dongsi",
    "Guanyuan",
    "Gucheng",
    "Huairou",
    "Nongzhanguan",
    "Shunyi",
    "Tiantan",
    "Wanliu",
    "Wanshouxigong",
];

pub const HEADER: [&str; 18] = [
    "No", "year", "month", "day", "hour", "PM2.5", "PM10", "SO2", "NO2", "CO", "O3", "TEMP", "PRES", "DEWP", "RAIN",
    "wd", "WSPM", "station",
];

/// Numeric columns in file order (`wd` sits between `RAIN` and `WSPM`).
pub const NUMERIC: [&str; 11] = [
    "PM2.5", "PM10", "SO2", "NO2", "CO", "O3", "TEMP", "PRES", "DEWP", "RAIN", "WSPM",
];

/// Weather inputs kept for modelling. The other pollutants track PM2.5 too
/// closely to be used as inputs.
pub const WEATHER: [&str; 5] = ["TEMP", "PRES", "DEWP", "RAIN", "WSPM"];
pub const EXCLUDED: [&str; 5] = ["PM10", "SO2", "NO2", "CO", "O3"];

pub const COMPASS: [&str; 16] = [
    "N", "NNE", "NE", "ENE", "E", "ESE", "SE", "SSE", "S", "SSW", "SW", "WSW", "W", "WNW", "NW", "NNW",
];

fn col(name: &str) -> usize {
    NUMERIC.iter().position(|c| *c == name).expect("known column")
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationSeries {
    pub station: String,
    pub timestamps: Vec<NaiveDateTime>,
    /// One vector per entry of [`NUMERIC`].
    pub numeric: Vec<Vec<Option<f64>>>,
    pub wd: Vec<Option<String>>,
}

impl StationSeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn column(&self, name: &str) -> &[Option<f64>] {
        &self.numeric[col(name)]
    }

    pub fn missing_cells(&self) -> usize {
        self.numeric.iter().flatten().filter(|v| v.is_none()).count() + self.wd.iter().filter(|v| v.is_none()).count()
    }

    /// First `hours` rows.
    pub fn truncate(&self, hours: usize) -> StationSeries {
        let n = hours.min(self.len());
        StationSeries {
            station: self.station.clone(),
            timestamps: self.timestamps[..n].to_vec(),
            numeric: self.numeric.iter().map(|c| c[..n].to_vec()).collect(),
            wd: self.wd[..n].to_vec(),
        }
    }

    fn check_hourly(&self) -> Result<()> {
        for (i, pair) in self.timestamps.windows(2).enumerate() {
            if pair[1] - pair[0] != Duration::hours(1) {
                return Err(Error::Data(format!(
                    "station {}: timestamps not hourly at row {}",
                    self.station,
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

fn station_file(dir: &Path, station: &str) -> Result<PathBuf> {
    let prefix = format!("PRSA_Data_{station}_");
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut hits: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(&prefix) && n.ends_with(".csv"))
        })
        .collect();
    hits.sort();
    hits.into_iter()
        .next()
        .ok_or_else(|| Error::Data(format!("no file for station {station} in {}", dir.display())))
}

fn parse_station(path: &Path, station: &str) -> Result<StationSeries> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let pos = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Ingest {
            path: path.to_path_buf(),
            row: 0,
            msg: format!("missing column {name:?}"),
        })
    };
    let (yi, mi, di, hi) = (pos("year")?, pos("month")?, pos("day")?, pos("hour")?);
    let num_pos: Vec<usize> = NUMERIC.iter().map(|c| pos(c)).collect::<Result<_>>()?;
    let wd_pos = pos("wd")?;
    let mut series = StationSeries {
        station: station.to_string(),
        timestamps: Vec::new(),
        numeric: vec![Vec::new(); NUMERIC.len()],
        wd: Vec::new(),
    };
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let ingest = |msg: String| Error::Ingest {
            path: path.to_path_buf(),
            row,
            msg,
        };
        let int = |j: usize| -> Result<u32> {
            rec.get(j)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| ingest("bad timestamp field".into()))
        };
        let (year, month, day, hour) = (int(yi)?, int(mi)?, int(di)?, int(hi)?);
        let ts = NaiveDate::from_ymd_opt(year as i32, month, day)
            .and_then(|d| d.and_hms_opt(hour, 0, 0))
            .ok_or_else(|| ingest("invalid date".into()))?;
        series.timestamps.push(ts);
        for (c, &p) in num_pos.iter().enumerate() {
            let raw = rec.get(p).unwrap_or("").trim();
            let v = if raw.is_empty() || raw == "NA" {
                None
            } else {
                Some(
                    raw.parse::<f64>()
                        .map_err(|_| ingest(format!("column {:?}: {raw:?} is not numeric", NUMERIC[c])))?,
                )
            };
            series.numeric[c].push(v);
        }
        let wd = rec.get(wd_pos).unwrap_or("").trim();
        series
            .wd
            .push((!wd.is_empty() && wd != "NA").then(|| wd.to_string()));
    }
    series.check_hourly()?;
    Ok(series)
}

/// Loads one file per requested station from `dir`. Files follow the public
/// naming `PRSA_Data_<Station>_<range>.csv`. Missing cells are kept.
pub fn load_air_quality(dir: &Path, stations: &[&str]) -> Result<Vec<StationSeries>> {
    let paths: Vec<(PathBuf, &str)> = stations
        .iter()
        .map(|s| station_file(dir, s).map(|p| (p, *s)))
        .collect::<Result<_>>()?;
    par::try_map_slice(&paths, |(p, s)| parse_station(p, s))
}

fn interpolate_column(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let known: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let (&first, &last) = (known.first()?, known.last()?);
    let mut out = vec![0.0; values.len()];
    for o in out.iter_mut().take(first + 1) {
        *o = values[first].unwrap();
    }
    for o in out.iter_mut().skip(last) {
        *o = values[last].unwrap();
    }
    for pair in known.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (values[a].unwrap(), values[b].unwrap());
        out[a] = va;
        for (k, o) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            *o = va + (vb - va) * (k - a) as f64 / (b - a) as f64;
        }
        out[b] = vb;
    }
    Some(out)
}

/// Fills numeric gaps by linear interpolation between the neighbouring
/// observations (nearest value beyond either end) and wind-direction gaps
/// with the previous observation. Observed cells are unchanged.
pub fn interpolate_missing(series: &StationSeries) -> Result<StationSeries> {
    let numeric = series
        .numeric
        .iter()
        .enumerate()
        .map(|(c, values)| {
            interpolate_column(values)
                .map(|v| v.into_iter().map(Some).collect())
                .ok_or_else(|| Error::Data(format!("station {}: column {} is entirely missing", series.station, NUMERIC[c])))
        })
        .collect::<Result<Vec<Vec<Option<f64>>>>>()?;
    let first = series
        .wd
        .iter()
        .flatten()
        .next()
        .ok_or_else(|| Error::Data(format!("station {}: column wd is entirely missing", series.station)))?
        .clone();
    let mut prev = first;
    let wd = series
        .wd
        .iter()
        .map(|w| {
            if let Some(w) = w {
                prev = w.clone();
            }
            Some(prev.clone())
        })
        .collect();
    Ok(StationSeries {
        station: series.station.clone(),
        timestamps: series.timestamps.clone(),
        numeric,
        wd,
    })
}

/// Wind-direction levels present in any of the series, in compass order
/// (unknown labels sorted after).
pub fn wd_levels(series: &[StationSeries]) -> Vec<String> {
    let mut levels: Vec<String> = series.iter().flat_map(|s| s.wd.iter().flatten().cloned()).collect();
    levels.sort_by_key(|l| (COMPASS.iter().position(|c| c == l).unwrap_or(usize::MAX), l.clone()));
    levels.dedup();
    levels
}

/// Model inputs of one station: the weather columns followed by a one-hot
/// wind-direction block, plus PM2.5 as the label source.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    pub station: String,
    pub names: Vec<String>,
    pub features: Vec<f64>,
    pub pm25: Vec<f64>,
}

impl FeatureSeries {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.pm25.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pm25.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> FeatureSeries {
        let d = self.dim();
        FeatureSeries {
            station: self.station.clone(),
            names: self.names.clone(),
            features: self.features[range.start * d..range.end * d].to_vec(),
            pm25: self.pm25[range].to_vec(),
        }
    }

    /// Min-max scales the weather columns; the one-hot block is left as is.
    pub fn scale_weather(&mut self, scaler: &ScalerParams) {
        let d = self.dim();
        for row in self.features.chunks_mut(d) {
            for (j, v) in row.iter_mut().take(scaler.dim()).enumerate() {
                *v = scaler.scale(j, *v);
            }
        }
    }

    pub fn weather_matrix(&self) -> Vec<f64> {
        let d = self.dim();
        self.features
            .chunks(d)
            .flat_map(|r| r[..WEATHER.len()].iter().copied())
            .collect()
    }
}

/// Requires an interpolated series.
pub fn select_features_airq(series: &StationSeries, wd_levels: &[String]) -> Result<FeatureSeries> {
    let weather: Vec<&[Option<f64>]> = WEATHER.iter().map(|c| series.column(c)).collect();
    let pm = series.column("PM2.5");
    let n = series.len();
    let mut names: Vec<String> = WEATHER.iter().map(|s| s.to_string()).collect();
    names.extend(wd_levels.iter().map(|l| format!("wd_{l}")));
    let dim = names.len();
    let mut features = Vec::with_capacity(n * dim);
    let mut pm25 = Vec::with_capacity(n);
    for t in 0..n {
        for w in &weather {
            features.push(w[t].ok_or_else(|| Error::Data("select_features_airq needs an interpolated series".into()))?);
        }
        let wd = series.wd[t]
            .as_deref()
            .ok_or_else(|| Error::Data("select_features_airq needs an interpolated series".into()))?;
        let pos = wd_levels
            .iter()
            .position(|l| l == wd)
            .ok_or_else(|| Error::Data(format!("wind direction {wd:?} not among the levels")))?;
        features.extend((0..wd_levels.len()).map(|j| if j == pos { 1.0 } else { 0.0 }));
        pm25.push(pm[t].ok_or_else(|| Error::Data("select_features_airq needs an interpolated series".into()))?);
    }
    Ok(FeatureSeries {
        station: series.station.clone(),
        names,
        features,
        pm25,
    })
}

/// PM2.5 boundaries of the low / medium / high classes. A value `v` is low
/// when `v <= low`, medium when `v <= high`, otherwise high.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    pub low: f64,
    pub high: f64,
}

impl ClassThresholds {
    pub fn classify(&self, v: f64) -> usize {
        if v <= self.low {
            0
        } else if v <= self.high {
            1
        } else {
            2
        }
    }

    pub fn shares(&self, values: &[f64]) -> [f64; 3] {
        let mut counts = [0usize; 3];
        for &v in values {
            counts[self.classify(v)] += 1;
        }
        counts.map(|c| c as f64 / values.len() as f64)
    }
}

/// Inverse empirical CDF: the smallest sample `x` with `F(x) >= p`.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Empirical tertiles of the full set of PM2.5 values.
pub fn fit_class_thresholds(values: &[f64]) -> Result<ClassThresholds> {
    if values.len() < 3 {
        return Err(Error::Data("need at least three values to fit tertiles".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let low = quantile(&sorted, 1.0 / 3.0);
    let high = quantile(&sorted, 2.0 / 3.0);
    if !(low < high) {
        return Err(Error::Data(format!("degenerate tertiles ({low}, {high})")));
    }
    Ok(ClassThresholds { low, high })
}

/// Sliding windows of `window` consecutive hours; the label of a window is
/// the class of PM2.5 at its final hour. Windows end at
/// `window - 1 + k * stride`.
pub fn make_windows(series: &FeatureSeries, thresholds: &ClassThresholds, window: usize, stride: usize) -> Result<Batch> {
    let t = series.len();
    if window == 0 || stride == 0 {
        return Err(Error::Config("window and stride must be positive".into()));
    }
    if t < window {
        return Err(Error::Data(format!(
            "station {}: {t} hours is shorter than the {window}-hour window",
            series.station
        )));
    }
    let d = series.dim();
    let count = (t - window) / stride + 1;
    let mut data = Vec::with_capacity(count * window * d);
    let mut labels = Vec::with_capacity(count);
    for k in 0..count {
        let start = k * stride;
        data.extend_from_slice(&series.features[start * d..(start + window) * d]);
        labels.push(thresholds.classify(series.pm25[start + window - 1]));
    }
    Batch::new(
        Inputs::Sequence {
            steps: window,
            features: d,
            data,
        },
        Targets::Classes { n_classes: 3, labels },
    )
}

pub const REFERENCE_START: (i32, u32, u32) = (2013, 3, 1);
pub const REFERENCE_HOURS: usize = 35064;

fn compass_label(deg: f64) -> &'static str {
    let idx = ((deg.rem_euclid(360.0) + 11.25) / 22.5) as usize % 16;
    COMPASS[idx]
}

fn round_to(v: f64, digits: i32) -> f64 {
    let f = 10f64.powi(digits);
    (v * f).round() / f
}

/// Seeded stand-in for the station files: hourly rows from 2013-03-01
/// for `hours` hours (the reference span is [`REFERENCE_HOURS`]).
///
/// Stations share one regional weather state. A slow ventilation factor
/// drives wind speed and direction, pressure, humidity and temperature
/// anomalies; log PM2.5 relaxes towards a level set by ventilation, season,
/// time of day and rain, so pollution builds up over stagnant spells and is
/// cleared by northerly winds. About 1% of cells are missing, plus
/// occasional multi-hour outages.
pub fn synth_air_quality(seed: u64, stations: &[&str], hours: usize) -> Vec<StationSeries> {
    let (y, m, d) = REFERENCE_START;
    let start = NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let timestamps: Vec<NaiveDateTime> = (0..hours).map(|h| start + Duration::hours(h as i64)).collect();

    let mut rng = rng::stream(seed, &[0xA1]);
    let std = Normal::new(0.0, 1.0).unwrap();
    let rho_v = (-1.0f64 / 30.0).exp();
    let mut v = 0.0f64;
    let mut temp_noise = 0.0f64;
    let mut pres_noise = 0.0f64;
    let mut raining = false;
    let mut log_pm = 4.0f64;
    struct Regional {
        v: f64,
        rain: f64,
        temp: f64,
        pres: f64,
        spread: f64,
        log_pm: f64,
        season: f64,
        diurnal: f64,
    }
    let regional: Vec<Regional> = timestamps
        .iter()
        .map(|ts| {
            let doy = f64::from(ts.ordinal());
            let hour = f64::from(ts.hour());
            let season = (2.0 * PI * (doy - 105.0) / 365.25).sin();
            let diurnal = (2.0 * PI * (hour - 9.0) / 24.0).sin();
            v = rho_v * v + (1.0 - rho_v * rho_v).sqrt() * std.sample(&mut rng);
            temp_noise = 0.95 * temp_noise + 0.5 * std.sample(&mut rng);
            pres_noise = 0.98 * pres_noise + 0.4 * std.sample(&mut rng);
            let summer = 0.5 * (season + 1.0);
            raining = if raining {
                rng.random::<f64>() < 0.75
            } else {
                rng.random::<f64>() < (0.002 + 0.012 * summer) * (1.0 + (-v).max(0.0))
            };
            let rain = if raining {
                round_to(-(1.0 - rng.random::<f64>()).ln() * (0.5 + 2.0 * summer), 1)
            } else {
                0.0
            };
            let temp = 13.0 + 15.0 * season + 4.5 * diurnal - 2.0 * v + temp_noise;
            let pres = 1012.0 - 11.0 * season + 4.0 * v + pres_noise;
            let spread = if raining {
                1.0 + rng.random::<f64>()
            } else {
                (9.0 + 5.0 * v + 3.0 * diurnal + 1.5 * std.sample(&mut rng)).max(0.5)
            };
            let winter = 0.5 * (1.0 - season);
            let target = 4.0 - 1.1 * v + 0.35 * winter + 0.2 * (2.0 * PI * (hour - 21.0) / 24.0).cos()
                - if raining { 1.0 } else { 0.0 };
            let k = 0.05 + 0.06 * v.max(0.0) + if rain > 1.0 { 0.1 } else { 0.0 };
            log_pm += k * (target - log_pm) + 0.15 * std.sample(&mut rng);
            Regional {
                v,
                rain,
                temp,
                pres,
                spread,
                log_pm,
                season,
                diurnal,
            }
        })
        .collect();

    stations
        .iter()
        .map(|&station| {
            let mut rng = rng::stream(seed, &[0xA2, rng::key_hash(station)]);
            let temp_off = 0.8 * std.sample(&mut rng);
            let pres_off = if matches!(station, "Dingling" | "Huairou" | "Changping") {
                -6.0
            } else {
                0.0
            } + 0.5 * std.sample(&mut rng);
            let pm_off = 0.12 * std.sample(&mut rng);
            let wind_gain = 1.0 + 0.15 * std.sample(&mut rng);
            let mut local = 0.0f64;
            let mut outage = 0usize;
            let mut numeric = vec![Vec::with_capacity(hours); NUMERIC.len()];
            let mut wd = Vec::with_capacity(hours);
            for r in &regional {
                local = 0.9 * local + 0.08 * std.sample(&mut rng);
                let lp = r.log_pm + pm_off + local;
                let pm25 = lp.exp().max(2.0).round();
                let pm10 = (pm25 * (1.15 + 0.3 * rng.random::<f64>()) + 5.0 * rng.random::<f64>()).round();
                let so2 = (3.0 + 0.08 * pm25 + 8.0 * (0.5 * (1.0 - r.season)) * rng.random::<f64>()).round();
                let no2 = (12.0 + 0.35 * pm25 + 10.0 * rng.random::<f64>()).round();
                let co = (100.0 * (2.0 + 0.12 * pm25 * (0.8 + 0.4 * rng.random::<f64>()))).round();
                let o3 = (60.0 + 45.0 * r.season + 20.0 * r.diurnal - 0.1 * pm25 + 10.0 * std.sample(&mut rng))
                    .max(2.0)
                    .round();
                let temp = round_to(r.temp + temp_off + 0.3 * std.sample(&mut rng), 1);
                let pres = round_to(r.pres + pres_off + 0.3 * std.sample(&mut rng), 1);
                let dewp = round_to(temp - r.spread + 0.4 * std.sample(&mut rng), 1);
                let wspm =
                    round_to((wind_gain * (1.7 + 1.1 * r.v + 0.5 * r.diurnal) + 0.5 * std.sample(&mut rng)).max(0.0), 1);
                let dir = 180.0 - 180.0 / (1.0 + (-2.0 * r.v).exp()) + 35.0 * std.sample(&mut rng);
                let rain = r.rain;
                let values = [pm25, pm10, so2, no2, co, o3, temp, pres, dewp, rain, wspm];

                if outage == 0 && rng.random::<f64>() < 0.0005 {
                    outage = rng.random_range(1..=24);
                }
                if outage > 0 {
                    outage -= 1;
                    for c in numeric.iter_mut() {
                        c.push(None);
                    }
                    wd.push(None);
                    continue;
                }
                for (c, &value) in numeric.iter_mut().zip(&values) {
                    c.push((rng.random::<f64>() >= 0.01).then_some(value));
                }
                wd.push((rng.random::<f64>() >= 0.003).then(|| compass_label(dir).to_string()));
            }
            StationSeries {
                station: station.to_string(),
                timestamps: timestamps.clone(),
                numeric,
                wd,
            }
        })
        .collect()
}

fn range_tag(series: &StationSeries) -> String {
    match (series.timestamps.first(), series.timestamps.last()) {
        (Some(a), Some(b)) => format!("{}-{}", a.format("%Y%m%d"), b.format("%Y%m%d")),
        _ => "empty".into(),
    }
}

fn fmt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v}"))
}

/// Writes a series in the public file layout and returns the path.
pub fn write_station_csv(series: &StationSeries, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(format!("PRSA_Data_{}_{}.csv", series.station, range_tag(series)));
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_path(&path)?;
    w.write_record(HEADER)?;
    for (i, ts) in series.timestamps.iter().enumerate() {
        let mut rec = vec![
            (i + 1).to_string(),
            ts.year().to_string(),
            ts.month().to_string(),
            ts.day().to_string(),
            ts.hour().to_string(),
        ];
        rec.extend(series.numeric[..10].iter().map(|c| fmt_num(c[i])));
        rec.push(series.wd[i].clone().unwrap_or_else(|| "NA".into()));
        rec.push(fmt_num(series.numeric[10][i]));
        rec.push(series.station.clone());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
