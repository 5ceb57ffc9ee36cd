//! Synthetic mobile-network records and their daily per-user aggregates.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::table::{Cell, LabeledTable};
use super::scaler::ScalerParams;
use crate::nn::{Batch, Targets};
use crate::{rng, Error, Result};

pub const COLUMNS: [&str; 17] = [
    "user_id",
    "provider",
    "date",
    "calendar_week",
    "day_of_week",
    "month",
    "weekend",
    "wifi_share",
    "rsrq_mean",
    "rsrq_var",
    "rsrp_mean",
    "rsrp_var",
    "rssnr_mean",
    "rssnr_var",
    "rssi_mean",
    "rssi_var",
    "radius_m",
];

/// Model inputs, in column order.
pub const FEATURES: [&str; 13] = [
    "calendar_week",
    "day_of_week",
    "month",
    "weekend",
    "wifi_share",
    "rsrq_mean",
    "rsrq_var",
    "rsrp_mean",
    "rsrp_var",
    "rssnr_mean",
    "rssnr_var",
    "rssi_mean",
    "rssi_var",
];

pub const PROVIDERS: [&str; 3] = ["A", "B", "C"];
const PROVIDER_SHARES: [f64; 3] = [0.5, 0.3, 0.2];

pub const MIN_DAYS: usize = 20;
pub const MIN_RECORDS_PER_DAY: usize = 10;

/// Observation window of the generator: 181 days from 2021-01-01.
const WINDOW_DAYS: usize = 181;

/// Log-scale noise of the radius that no measurement reflects.
const RADIUS_NOISE: f64 = 1.0;

/// One raw measurement. `radius_m` is the user's radius of action on that
/// day, computed upstream from location traces.
#[derive(Debug, Clone, PartialEq)]
pub struct MnoRecord {
    pub user_id: u32,
    pub provider: &'static str,
    pub date: NaiveDate,
    pub wifi: bool,
    pub rsrq: f64,
    pub rsrp: f64,
    pub rssnr: f64,
    pub rssi: f64,
    pub radius_m: f64,
}

/// Removes every record of users observed on fewer than [`MIN_DAYS`] days
/// or with fewer than [`MIN_RECORDS_PER_DAY`] records on any observed day.
pub fn filter_mno(records: &[MnoRecord]) -> Vec<MnoRecord> {
    let mut per_day: BTreeMap<u32, BTreeMap<NaiveDate, usize>> = BTreeMap::new();
    for r in records {
        *per_day.entry(r.user_id).or_default().entry(r.date).or_default() += 1;
    }
    let keep = |user: u32| {
        let days = &per_day[&user];
        days.len() >= MIN_DAYS && days.values().all(|&c| c >= MIN_RECORDS_PER_DAY)
    };
    records.iter().filter(|r| keep(r.user_id)).cloned().collect()
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

fn round_to(v: f64, digits: i32) -> f64 {
    let f = 10f64.powi(digits);
    (v * f).round() / f
}

/// One row per (user, day), ordered by user then date.
pub fn aggregate_daily(records: &[MnoRecord]) -> Result<LabeledTable> {
    let mut groups: BTreeMap<(u32, NaiveDate), Vec<&MnoRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.user_id, r.date)).or_default().push(r);
    }
    let rows = groups
        .into_iter()
        .map(|((user, date), recs)| {
            let stat = |f: fn(&MnoRecord) -> f64| {
                let v: Vec<f64> = recs.iter().map(|r| f(r)).collect();
                mean_var(&v)
            };
            let wifi = recs.iter().filter(|r| r.wifi).count() as f64 / recs.len() as f64;
            let dow = date.weekday().number_from_monday();
            let mut row = vec![
                Cell::Text(format!("u{user:06}")),
                Cell::Text(recs[0].provider.to_string()),
                Cell::Text(date.format("%Y-%m-%d").to_string()),
                Cell::Num(f64::from(date.iso_week().week())),
                Cell::Num(f64::from(dow)),
                Cell::Num(f64::from(date.month())),
                Cell::Num(if dow >= 6 { 1.0 } else { 0.0 }),
                Cell::Num(round_to(wifi, 4)),
            ];
            for f in [
                (|r: &MnoRecord| r.rsrq) as fn(&MnoRecord) -> f64,
                |r| r.rsrp,
                |r| r.rssnr,
                |r| r.rssi,
            ] {
                let (m, v) = stat(f);
                row.push(Cell::Num(round_to(m, 3)));
                row.push(Cell::Num(round_to(v, 3)));
            }
            row.push(Cell::Num(recs[0].radius_m));
            row
        })
        .collect();
    LabeledTable::new(COLUMNS.iter().map(|c| c.to_string()).collect(), rows, "radius_m", Some("provider"))
}

fn pick_provider(u: f64) -> &'static str {
    let mut acc = 0.0;
    for (p, s) in PROVIDERS.iter().zip(PROVIDER_SHARES) {
        acc += s;
        if u < acc {
            return p;
        }
    }
    PROVIDERS[PROVIDERS.len() - 1]
}

/// Raw records for `n_users` users that pass [`filter_mno`], interleaved
/// with roughly one violating user per ten (too few days, or one day with
/// too few records).
///
/// Each user has a home environment (signal level, indoor Wi-Fi habit) and
/// a mobility level. The daily log radius combines that mobility, a weekend
/// effect and a large day-specific shock. Busy days leave traces in the
/// measurements: less Wi-Fi, more varied signal conditions, and signal
/// levels drifting towards the (weaker) outskirts.
pub fn synth_mno_records(n_users: usize, seed: u64) -> Vec<MnoRecord> {
    let start = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
    let std = Normal::new(0.0, 1.0).unwrap();
    let mut records = Vec::new();
    let mut user_id = 0u32;
    let mut valid = 0usize;
    let mut rng_plan = rng::stream(seed, &[0x3A0]);
    while valid < n_users {
        user_id += 1;
        let violating = rng_plan.random::<f64>() < 0.1;
        if !violating {
            valid += 1;
        }
        let mut rng = rng::stream(seed, &[0x3A1, u64::from(user_id)]);
        let provider = pick_provider(rng.random());
        let prov_idx = PROVIDERS.iter().position(|p| *p == provider).unwrap() as f64;
        let mobility = std.sample(&mut rng);
        let urban = std.sample(&mut rng);
        let home_wifi = std.sample(&mut rng);
        let short_history = violating && rng.random::<bool>();
        let n_days = if short_history {
            rng.random_range(5..MIN_DAYS)
        } else {
            rng.random_range(MIN_DAYS..=60)
        };
        let mut days = sample(&mut rng, WINDOW_DAYS, n_days).into_vec();
        days.sort_unstable();
        let thin_day = (violating && !short_history).then(|| rng.random_range(0..n_days));
        for (di, day) in days.into_iter().enumerate() {
            let date = start + Duration::days(day as i64);
            let weekend = matches!(date.weekday(), Weekday::Sat | Weekday::Sun);
            let summer = f64::from(date.month()) / 6.0;
            let shock = std.sample(&mut rng);
            let busy = 0.45 * mobility + if weekend { 0.35 } else { 0.0 } + 0.15 * summer + 0.8 * shock;
            let spread = (0.3 * busy).exp();
            let p_wifi = 1.0 / (1.0 + (-(0.4 + 0.8 * home_wifi - 0.9 * busy)).exp());
            let rsrp_day = -96.0 + 6.0 * urban - 2.5 * prov_idx - 3.0 * busy.max(0.0) + 2.0 * std.sample(&mut rng);
            let rsrq_day = -10.5 + 0.12 * (rsrp_day + 96.0) - 0.6 * prov_idx + 0.8 * std.sample(&mut rng);
            let rssnr_day = 11.0 + 0.35 * (rsrp_day + 96.0) + 1.5 * std.sample(&mut rng);
            let excursion = if weekend && p_wifi < 0.35 { 0.4 } else { 0.0 };
            let rural = if rsrp_day < -104.0 { 0.3 } else { 0.0 };
            let log_radius = 7.6 + 0.5 * busy + excursion + rural + RADIUS_NOISE * std.sample(&mut rng);
            let radius = log_radius.exp().clamp(50.0, 80_000.0).round();
            let count = if thin_day == Some(di) {
                rng.random_range(1..MIN_RECORDS_PER_DAY)
            } else {
                rng.random_range(MIN_RECORDS_PER_DAY..=50)
            };
            for _ in 0..count {
                let rsrp = rsrp_day + 5.0 * spread * std.sample(&mut rng);
                records.push(MnoRecord {
                    user_id,
                    provider,
                    date,
                    wifi: rng.random::<f64>() < p_wifi,
                    rsrq: (rsrq_day + 0.1 * (rsrp - rsrp_day) + 1.8 * spread * std.sample(&mut rng)).clamp(-20.0, -3.0),
                    rsrp: rsrp.clamp(-140.0, -44.0),
                    rssnr: rssnr_day + 0.3 * (rsrp - rsrp_day) + 3.0 * spread * std.sample(&mut rng),
                    rssi: (rsrp + 28.0 + 3.0 * std.sample(&mut rng)).clamp(-113.0, -51.0),
                    radius_m: radius,
                });
            }
        }
    }
    records
}

/// Daily table of `n_users` filtered users.
pub fn synth_mno(n_users: usize, seed: u64) -> Result<LabeledTable> {
    if n_users < 3 {
        return Err(Error::Config(format!("synth_mno needs at least 3 users, got {n_users}")));
    }
    aggregate_daily(&filter_mno(&synth_mno_records(n_users, seed)))
}

/// Reads a daily table written with the [`COLUMNS`] header.
pub fn load_mno(path: &Path) -> Result<LabeledTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    })?;
    let header: Vec<&str> = reader.headers()?.iter().collect();
    if header != COLUMNS {
        return Err(Error::Ingest {
            path: path.to_path_buf(),
            row: 0,
            msg: format!("header must be {}", COLUMNS.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, raw)| {
                if j < 3 {
                    return Ok(Cell::Text(raw.to_string()));
                }
                raw.trim().parse::<f64>().map(Cell::Num).map_err(|_| Error::Ingest {
                    path: path.to_path_buf(),
                    row: i + 1,
                    msg: format!("column {:?}: {raw:?} is not numeric", COLUMNS[j]),
                })
            })
            .collect::<Result<Vec<Cell>>>()?;
        rows.push(row);
    }
    LabeledTable::new(COLUMNS.iter().map(|c| c.to_string()).collect(), rows, "radius_m", Some("provider"))
}

/// Min-max encoding of the [`FEATURES`] and of the radius target.
#[derive(Debug, Clone, PartialEq)]
pub struct MnoEncoder {
    pub scaler: ScalerParams,
    pub target: ScalerParams,
}

impl MnoEncoder {
    pub fn fit(train: &LabeledTable) -> Result<Self> {
        Ok(MnoEncoder {
            scaler: ScalerParams::fit(&raw_features(train)?, FEATURES.len())?,
            target: ScalerParams::fit_column(&train.targets()?)?,
        })
    }

    pub fn features(&self, table: &LabeledTable) -> Result<Vec<f64>> {
        let mut x = raw_features(table)?;
        self.scaler.transform(&mut x);
        Ok(x)
    }

    pub fn encode(&self, table: &LabeledTable) -> Result<Batch> {
        let y = table.targets()?.into_iter().map(|v| self.target.scale(0, v)).collect();
        Batch::flat(FEATURES.len(), self.features(table)?, Targets::Regression(y))
    }

    pub fn unscale_target(&self, v: f64) -> f64 {
        self.target.unscale(0, v)
    }
}

/// Unscaled feature matrix, row-major.
pub fn raw_features(table: &LabeledTable) -> Result<Vec<f64>> {
    let cols: Vec<Vec<f64>> = FEATURES.iter().map(|c| table.numeric_column(c)).collect::<Result<_>>()?;
    Ok((0..table.len()).flat_map(|i| cols.iter().map(move |c| c[i])).collect())
}
