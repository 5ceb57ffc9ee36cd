use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl OlsModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let d = self.coefficients.len().max(1);
        x.chunks(d).map(|r| self.predict_row(r)).collect()
    }
}

/// Least squares with an intercept via Householder QR. A design matrix that
/// is rank deficient (relative pivot below 1e-10) is an error rather than a
/// pseudo-inverse fit.
pub fn ols_fit(x: &[f64], d: usize, y: &[f64]) -> Result<OlsModel> {
    let n = y.len();
    if x.len() != n * d {
        return Err(Error::LengthMismatch {
            expected: n * d,
            got: x.len(),
        });
    }
    let p = d + 1;
    if n <= p {
        return Err(Error::Linalg(format!("{n} rows cannot determine {p} coefficients")));
    }
    let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x[i * d + j - 1] });
    let qr = design.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..p).map(|i| r[(i, i)].abs()).collect();
    let scale = diag.iter().copied().fold(0.0, f64::max);
    if let Some(j) = diag.iter().position(|&v| !(v > 1e-10 * scale)) {
        return Err(Error::Linalg(format!("design matrix is rank deficient at column {j}")));
    }
    let mut rhs = DVector::from_column_slice(y);
    qr.q_tr_mul(&mut rhs);
    let top = rhs.rows(0, p).into_owned();
    let beta = r
        .solve_upper_triangular(&top)
        .ok_or_else(|| Error::Linalg("triangular solve failed".into()))?;
    Ok(OlsModel {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
    })
}
