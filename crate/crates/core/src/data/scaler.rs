use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-feature min and max fitted on a training split. Transforming the
/// training data lands exactly in `[0, 1]`; other data may fall outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    /// Fits on a row-major `n x dim` matrix.
    pub fn fit(data: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::Data("cannot fit a scaler on an empty matrix".into()));
        }
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for row in data.chunks(dim) {
            for j in 0..dim {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        Ok(ScalerParams { min, max })
    }

    pub fn fit_column(values: &[f64]) -> Result<Self> {
        Self::fit(values, 1)
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    #[inline]
    pub fn scale(&self, j: usize, v: f64) -> f64 {
        let span = self.max[j] - self.min[j];
        if span > 0.0 {
            (v - self.min[j]) / span
        } else {
            0.0
        }
    }

    #[inline]
    pub fn unscale(&self, j: usize, v: f64) -> f64 {
        self.min[j] + v * (self.max[j] - self.min[j])
    }

    pub fn transform(&self, data: &mut [f64]) {
        let dim = self.dim();
        for row in data.chunks_mut(dim) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.scale(j, *v);
            }
        }
    }
}

/// Mean and population standard deviation of a training column, mapping it
/// to zero mean and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("cannot standardize an empty column".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Standardizer {
            mean,
            std: if var > 0.0 { var.sqrt() } else { 1.0 },
        })
    }

    pub fn scale(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn unscale(&self, v: f64) -> f64 {
        self.mean + v * self.std
    }
}
