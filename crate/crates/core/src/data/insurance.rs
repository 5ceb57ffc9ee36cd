//! Medical insurance charges: `age,sex,bmi,children,smoker,region,charges`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use super::scaler::{ScalerParams, Standardizer};
use super::table::{Cell, LabeledTable};
use crate::nn::{Batch, Targets};
use crate::{rng, Error, Result};

pub const COLUMNS: [&str; 7] = ["age", "sex", "bmi", "children", "smoker", "region", "charges"];
pub const REGIONS: [&str; 4] = ["northeast", "northwest", "southeast", "southwest"];
const NUMERIC: [&str; 4] = ["age", "bmi", "children", "charges"];
const TEXT: [&str; 3] = ["sex", "smoker", "region"];

pub fn load_insurance(path: &Path) -> Result<LabeledTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    })?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    for expected in COLUMNS {
        if !header.iter().any(|h| h == expected) {
            return Err(Error::Ingest {
                path: path.to_path_buf(),
                row: 0,
                msg: format!("missing column {expected:?}"),
            });
        }
    }
    let positions: Vec<usize> = COLUMNS
        .iter()
        .map(|c| header.iter().position(|h| h == c).unwrap())
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        let ingest = |msg: String| Error::Ingest {
            path: path.to_path_buf(),
            row: row_no,
            msg,
        };
        let mut row = Vec::with_capacity(COLUMNS.len());
        for (name, &pos) in COLUMNS.iter().zip(&positions) {
            let raw = record.get(pos).map(str::trim).unwrap_or("");
            if raw.is_empty() {
                return Err(ingest(format!("missing value in column {name:?}")));
            }
            if NUMERIC.contains(name) {
                let v: f64 = raw
                    .parse()
                    .map_err(|_| ingest(format!("column {name:?}: {raw:?} is not numeric")))?;
                if !v.is_finite() {
                    return Err(ingest(format!("column {name:?}: non-finite value")));
                }
                row.push(Cell::Num(v));
            } else {
                debug_assert!(TEXT.contains(name));
                row.push(Cell::Text(raw.to_string()));
            }
        }
        rows.push(row);
    }
    LabeledTable::new(
        COLUMNS.iter().map(|c| c.to_string()).collect(),
        rows,
        "charges",
        Some("region"),
    )
}

fn binary(value: &str, one: &str, zero: &str, column: &str) -> Result<f64> {
    if value == one {
        Ok(1.0)
    } else if value == zero {
        Ok(0.0)
    } else {
        Err(Error::Data(format!("unseen category {value:?} in column {column:?}")))
    }
}

/// Encoding fitted on a training split.
///
/// Features are `age, sex, bmi, children, smoker` with `age`, `bmi` and
/// `children` min-max scaled, `sex` (male = 1) and `smoker` (yes = 1)
/// binary. The centralized encoding appends a one-hot `region` block in
/// [`REGIONS`] order; the federated one leaves region to partitioning.
/// Targets are standardized with the training split's charges.
#[derive(Debug, Clone, PartialEq)]
pub struct InsuranceEncoder {
    pub scaler: ScalerParams,
    pub target: Standardizer,
    pub federated: bool,
}

impl InsuranceEncoder {
    pub fn fit(train: &LabeledTable, federated: bool) -> Result<Self> {
        let cols = ["age", "bmi", "children"].map(|c| train.numeric_column(c));
        let [age, bmi, children] = cols;
        let (age, bmi, children) = (age?, bmi?, children?);
        let data: Vec<f64> = (0..train.len()).flat_map(|i| [age[i], bmi[i], children[i]]).collect();
        Ok(InsuranceEncoder {
            scaler: ScalerParams::fit(&data, 3)?,
            target: Standardizer::fit(&train.targets()?)?,
            federated,
        })
    }

    pub fn feature_dim(&self) -> usize {
        if self.federated {
            5
        } else {
            5 + REGIONS.len()
        }
    }

    pub fn features(&self, table: &LabeledTable) -> Result<Vec<f64>> {
        let age = table.numeric_column("age")?;
        let bmi = table.numeric_column("bmi")?;
        let children = table.numeric_column("children")?;
        let sex = table.text_column("sex")?;
        let smoker = table.text_column("smoker")?;
        let region = if self.federated {
            None
        } else {
            Some(table.text_column("region")?)
        };
        let mut out = Vec::with_capacity(table.len() * self.feature_dim());
        for i in 0..table.len() {
            out.push(self.scaler.scale(0, age[i]));
            out.push(binary(sex[i], "male", "female", "sex")?);
            out.push(self.scaler.scale(1, bmi[i]));
            out.push(self.scaler.scale(2, children[i]));
            out.push(binary(smoker[i], "yes", "no", "smoker")?);
            if let Some(region) = &region {
                let pos = REGIONS
                    .iter()
                    .position(|r| *r == region[i])
                    .ok_or_else(|| Error::Data(format!("unseen category {:?} in column \"region\"", region[i])))?;
                out.extend((0..REGIONS.len()).map(|j| if j == pos { 1.0 } else { 0.0 }));
            }
        }
        Ok(out)
    }

    pub fn encode(&self, table: &LabeledTable) -> Result<Batch> {
        let x = self.features(table)?;
        let y = table.targets()?.into_iter().map(|v| self.target.scale(v)).collect();
        Batch::flat(self.feature_dim(), x, Targets::Regression(y))
    }

    pub fn unscale_target(&self, v: f64) -> f64 {
        self.target.unscale(v)
    }
}

/// Fits the encoding on the whole table and encodes it.
pub fn preprocess_insurance(table: &LabeledTable, for_federated: bool) -> Result<(Batch, InsuranceEncoder)> {
    let enc = InsuranceEncoder::fit(table, for_federated)?;
    Ok((enc.encode(table)?, enc))
}

/// Region counts of the reference file, in [`REGIONS`] order.
const REGION_COUNTS: [usize; 4] = [324, 325, 364, 325];
const CHILD_WEIGHTS: [f64; 6] = [0.429, 0.242, 0.179, 0.117, 0.019, 0.014];

/// Seeded stand-in for the insurance file: 1338 complete records with the
/// same columns, category levels, region counts and marginal shapes, and a
/// charge model with a smoker x obesity interaction and a heavy right tail
/// for non-smokers.
pub fn synth_insurance(seed: u64) -> LabeledTable {
    let mut rng = rng::stream(seed, &[0x1235]);
    let mut regions: Vec<&str> = REGIONS
        .iter()
        .zip(REGION_COUNTS)
        .flat_map(|(r, c)| std::iter::repeat_n(*r, c))
        .collect();
    regions.shuffle(&mut rng);
    let bmi_dist = Normal::new(30.7, 6.1).unwrap();
    let tight = Normal::new(0.0, 600.0).unwrap();
    let smoker_noise = Normal::new(0.0, 4000.0).unwrap();
    let tail = Exp::new(1.0 / 8000.0).unwrap();
    let rows = regions
        .into_iter()
        .map(|region| {
            let age: u32 = if rng.random::<f64>() < 0.05 {
                rng.random_range(18..=19)
            } else {
                rng.random_range(18..=64)
            };
            let male = rng.random::<bool>();
            let bmi = {
                let mut b: f64 = bmi_dist.sample(&mut rng);
                if region == "southeast" {
                    b += 2.5;
                }
                (b.clamp(16.0, 53.1) * 100.0).round() / 100.0
            };
            let children = {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                CHILD_WEIGHTS
                    .iter()
                    .position(|w| {
                        acc += w;
                        u < acc
                    })
                    .unwrap_or(5)
            };
            let smoker = rng.random::<f64>() < 0.205;
            let base = 1500.0 + 275.0 * f64::from(age - 18) + 450.0 * children as f64;
            let charges = if smoker {
                let jump = if bmi >= 30.0 { 33000.0 } else { 13000.0 };
                base + jump + 150.0 * (bmi - 30.0) + smoker_noise.sample(&mut rng)
            } else {
                let mut c = base + tight.sample(&mut rng);
                if rng.random::<f64>() < 0.17 {
                    c += 1500.0 + tail.sample(&mut rng);
                }
                c
            };
            let charges = (charges.max(1121.0) * 1000.0).round() / 1000.0;
            vec![
                Cell::Num(f64::from(age)),
                Cell::Text(if male { "male" } else { "female" }.into()),
                Cell::Num(bmi),
                Cell::Num(children as f64),
                Cell::Text(if smoker { "yes" } else { "no" }.into()),
                Cell::Text(region.into()),
                Cell::Num(charges),
            ]
        })
        .collect();
    LabeledTable::new(
        COLUMNS.iter().map(|c| c.to_string()).collect(),
        rows,
        "charges",
        Some("region"),
    )
    .expect("generator emits a rectangular table")
}
