//! Per-column standardization, `(x - mean) / std`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Columns whose standard deviation is at or below this are mapped to 0.
pub const ZERO_VARIANCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdDenominator {
    /// Divide by n.
    #[default]
    Population,
    /// Divide by n - 1.
    Sample,
}

impl std::str::FromStr for StdDenominator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "population" | "n" => Ok(StdDenominator::Population),
            "sample" | "n-1" => Ok(StdDenominator::Sample),
            other => Err(Error::InvalidConfig(format!("unknown std denominator `{other}`"))),
        }
    }
}

impl std::fmt::Display for StdDenominator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StdDenominator::Population => "population",
            StdDenominator::Sample => "sample",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn fit_standardizer(features: &Matrix) -> Result<StandardizerParams> {
    fit_standardizer_with(features, StdDenominator::Population)
}

pub fn fit_standardizer_with(
    features: &Matrix,
    denominator: StdDenominator,
) -> Result<StandardizerParams> {
    let n = features.n_rows();
    if n == 0 {
        return Err(Error::Empty("feature matrix"));
    }
    let d = features.n_cols();
    let mut mean = vec![0.0; d];
    for row in features.rows_iter() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    // Two-pass variance.
    let mut ss = vec![0.0; d];
    for row in features.rows_iter() {
        for ((s, &x), &m) in ss.iter_mut().zip(row).zip(&mean) {
            let dx = x - m;
            *s += dx * dx;
        }
    }
    let denom = match denominator {
        StdDenominator::Population => n as f64,
        StdDenominator::Sample => (n as f64 - 1.0).max(1.0),
    };
    let std = ss.iter().map(|s| (s / denom).sqrt()).collect();
    Ok(StandardizerParams { mean, std })
}

impl StandardizerParams {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, features: &Matrix) -> Result<Matrix> {
        features.check_cols(self.n_features())?;
        let mut out = features.clone();
        for i in 0..out.n_rows() {
            self.transform_row(out.row_mut(i));
        }
        Ok(out)
    }

    pub fn transform_row(&self, row: &mut [f64]) {
        for ((x, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = if s > ZERO_VARIANCE_EPS { (*x - m) / s } else { 0.0 };
        }
    }

    /// Maps standardized values back. Zero-variance columns return their mean.
    pub fn inverse_transform(&self, features: &Matrix) -> Result<Matrix> {
        features.check_cols(self.n_features())?;
        let mut out = features.clone();
        for i in 0..out.n_rows() {
            for ((x, &m), &s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *x = if s > ZERO_VARIANCE_EPS { *x * s + m } else { m };
            }
        }
        Ok(out)
    }
}

pub fn transform(params: &StandardizerParams, features: &Matrix) -> Result<Matrix> {
    params.transform(features)
}
