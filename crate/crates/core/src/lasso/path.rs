use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RgamError};

/// Default number of penalty values on a path.
pub const DEFAULT_NLAMBDA: usize = 100;

/// Decreasing sequence of lasso penalties `values[0] > values[1] > ... >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPath {
    values: Vec<f64>,
    lambda_max: f64,
    min_ratio: f64,
}

impl LambdaPath {
    /// `m` values spaced evenly on the log scale from `lambda_max` down to
    /// `min_ratio * lambda_max`.
    pub fn log_spaced(lambda_max: f64, m: usize, min_ratio: f64) -> Result<Self> {
        if m < 2 {
            return Err(RgamError::InvalidConfig(format!(
                "a lambda path needs at least 2 values, got {m}"
            )));
        }
        if !(min_ratio > 0.0 && min_ratio < 1.0) {
            return Err(RgamError::InvalidConfig(format!(
                "lambda min ratio must lie in (0, 1), got {min_ratio}"
            )));
        }
        if !(lambda_max.is_finite() && lambda_max > 0.0) {
            return Err(RgamError::DegenerateResponse);
        }
        let step = min_ratio.ln() / (m - 1) as f64;
        let mut values: Vec<f64> = (0..m).map(|k| lambda_max * (step * k as f64).exp()).collect();
        values[0] = lambda_max;
        values[m - 1] = lambda_max * min_ratio;
        Ok(Self {
            values,
            lambda_max,
            min_ratio,
        })
    }

    /// A user-supplied path. Values must be finite, non-negative and strictly
    /// decreasing; a single value (e.g. `[0.0]`) is allowed.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(RgamError::InvalidConfig("lambda path is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(RgamError::InvalidConfig(
                "lambda values must be finite and non-negative".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(RgamError::InvalidConfig(
                "lambda values must be strictly decreasing".into(),
            ));
        }
        let lambda_max = values[0];
        let min_ratio = if lambda_max > 0.0 {
            values[values.len() - 1] / lambda_max
        } else {
            0.0
        };
        Ok(Self {
            values,
            lambda_max,
            min_ratio,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.values.get(index).copied()
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn min_ratio(&self) -> f64 {
        self.min_ratio
    }

    /// Index of the path value closest to `lambda` on the log scale.
    pub fn nearest_index(&self, lambda: f64) -> usize {
        let dist = |v: f64| {
            if v > 0.0 && lambda > 0.0 {
                (v.ln() - lambda.ln()).abs()
            } else {
                (v - lambda).abs()
            }
        };
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if dist(v) < dist(self.values[best]) {
                best = k;
            }
        }
        best
    }
}

/// glmnet's convention: a shallower path when there are more features than
/// observations.
pub fn default_min_ratio(n: usize, p: usize) -> f64 {
    if n < p {
        1e-2
    } else {
        1e-4
    }
}

/// Largest absolute gradient of the least-squares loss at zero:
/// `max_j |<x_j, r>| / n`.
pub(crate) fn max_abs_gradient<'a>(
    columns: impl Iterator<Item = ArrayView1<'a, f64>>,
    working_response: ArrayView1<f64>,
) -> f64 {
    let n = working_response.len() as f64;
    columns
        .map(|c| (c.dot(&working_response) / n).abs())
        .fold(0.0, f64::max)
}

/// Builds the standard path for standardized features and a working response
/// (the centered response for gaussian data, `y - mu_null` otherwise).
pub fn make_lambda_path(
    x_std: ArrayView2<f64>,
    working_response: ArrayView1<f64>,
    m: usize,
    min_ratio: f64,
) -> Result<LambdaPath> {
    if x_std.nrows() != working_response.len() {
        return Err(RgamError::InvalidInput(format!(
            "x has {} rows but the working response has {} entries",
            x_std.nrows(),
            working_response.len()
        )));
    }
    let lambda_max = max_abs_gradient(x_std.columns().into_iter(), working_response);
    check_lambda_max(lambda_max, working_response)?;
    LambdaPath::log_spaced(lambda_max, m, min_ratio)
}

pub(crate) fn check_lambda_max(lambda_max: f64, working_response: ArrayView1<f64>) -> Result<()> {
    let n = working_response.len() as f64;
    let rms = (working_response.dot(&working_response) / n).sqrt();
    if !lambda_max.is_finite() || rms == 0.0 || lambda_max <= 1e-10 * rms {
        Err(RgamError::DegenerateResponse)
    } else {
        Ok(())
    }
}
