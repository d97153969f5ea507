//! Monte Carlo degrees of freedom.
//!
//! For a fitting procedure `y -> yhat` on a fixed design, the effective
//! degrees of freedom is `sum_i Cov(y_i, yhat_i) / sigma^2`. The estimator
//! draws `y* = mu + sigma z` for `B` independent standard normal vectors `z`,
//! refits, and averages `(yhat*_i - a_i)(y*_i - mu_i)` over replicates.
//!
//! Replicate `b` draws its noise from `ChaCha8Rng::seed_from_u64(seed)` with
//! the stream set to `b`, so adding replicates never changes earlier draws.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lasso::LambdaPath;
use crate::rgam::{fit_rgam, InitNonzero, RgamConfig, Step1Lambda};
use crate::{Dataset, Family, Result, RgamError, Scale};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofConfig {
    /// True mean of the response.
    pub mu: Vec<f64>,
    /// Noise standard deviation.
    pub sigma: f64,
    /// Number of Monte Carlo replicates.
    pub replicates: usize,
    /// Centering constants `a_i`; zero when absent.
    pub centering: Option<Vec<f64>>,
    pub seed: u64,
}

impl DofConfig {
    pub fn new(mu: Vec<f64>, sigma: f64, replicates: usize, seed: u64) -> Self {
        Self {
            mu,
            sigma,
            replicates,
            centering: None,
            seed,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.mu.len() != n {
            return Err(RgamError::InvalidConfig(format!(
                "mu has length {}, design has {n} rows",
                self.mu.len()
            )));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(RgamError::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.replicates < 2 {
            return Err(RgamError::InvalidConfig(format!(
                "at least 2 replicates are needed, got {}",
                self.replicates
            )));
        }
        if let Some(a) = &self.centering {
            if a.len() != n {
                return Err(RgamError::InvalidConfig(format!(
                    "centering has length {}, design has {n} rows",
                    a.len()
                )));
            }
        }
        if self.mu.iter().any(|v| !v.is_finite()) {
            return Err(RgamError::InvalidConfig("mu must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofEstimate {
    pub df_hat: f64,
    /// Standard deviation of the per-replicate contributions over `sqrt(B)`.
    pub standard_error: f64,
    pub replicates: usize,
    pub seed: u64,
    /// `sum_i (yhat*_i - a_i)(y*_i - mu_i) / sigma^2` for each replicate.
    pub contributions: Vec<f64>,
}

/// A procedure mapping a response vector to fitted values on a fixed design.
pub trait ResponseFitter: Sync {
    fn fitted_values(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>>;
}

/// Standard normal noise of replicate `b`.
pub fn replicate_noise(seed: u64, b: usize, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn estimate_df<F: ResponseFitter + ?Sized>(fitter: &F, x: ArrayView2<f64>, cfg: &DofConfig) -> Result<DofEstimate> {
    let n = x.nrows();
    cfg.validate(n)?;
    let sigma2 = cfg.sigma * cfg.sigma;
    let contributions = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let z = replicate_noise(cfg.seed, b, n);
            let y: Array1<f64> = cfg.mu.iter().zip(&z).map(|(m, e)| m + cfg.sigma * e).collect();
            let fitted = fitter
                .fitted_values(x, y.view())
                .map_err(|e| RgamError::Replicate {
                    index: b,
                    source: Box::new(e),
                })?;
            if fitted.len() != n {
                return Err(RgamError::Replicate {
                    index: b,
                    source: Box::new(RgamError::DimensionMismatch {
                        expected: n,
                        found: fitted.len(),
                    }),
                });
            }
            let s: f64 = (0..n)
                .map(|i| {
                    let a = cfg.centering.as_ref().map_or(0.0, |a| a[i]);
                    (fitted[i] - a) * (cfg.sigma * z[i])
                })
                .sum();
            Ok(s / sigma2)
        })
        .collect::<Result<Vec<f64>>>()?;
    let bf = cfg.replicates as f64;
    let df_hat = contributions.iter().sum::<f64>() / bf;
    let var = contributions.iter().map(|c| (c - df_hat).powi(2)).sum::<f64>() / (bf - 1.0);
    Ok(DofEstimate {
        df_hat,
        standard_error: (var / bf).sqrt(),
        replicates: cfg.replicates,
        seed: cfg.seed,
        contributions,
    })
}

/// Least squares on the columns of `x` plus an intercept.
#[derive(Debug, Clone, Copy, Default)]
pub struct OlsFitter;

impl ResponseFitter for OlsFitter {
    fn fitted_values(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        let (n, p) = x.dim();
        if n <= p + 1 {
            return Err(RgamError::InvalidInput(format!(
                "least squares with intercept needs more than {} rows, got {n}",
                p + 1
            )));
        }
        let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[[i, j - 1]] });
        let rhs = DVector::from_iterator(n, y.iter().copied());
        let gram = design.transpose() * &design;
        let chol = gram
            .cholesky()
            .ok_or_else(|| RgamError::InvalidInput("design columns are linearly dependent".into()))?;
        let coef = chol.solve(&(design.transpose() * rhs));
        let fitted = design * coef;
        Ok(fitted.iter().copied().collect())
    }
}

/// Predicts the sample mean everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct GrandMeanFitter;

impl ResponseFitter for GrandMeanFitter {
    fn fitted_values(&self, _x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        let m = y.mean().unwrap_or(0.0);
        Ok(Array1::from_elem(y.len(), m))
    }
}

/// Returns the response unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityFitter;

impl ResponseFitter for IdentityFitter {
    fn fitted_values(&self, _x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(y.to_owned())
    }
}

/// `yhat = S y` for a fixed matrix `S`; its degrees of freedom is `trace(S)`.
#[derive(Debug, Clone)]
pub struct LinearSmoother {
    pub matrix: Array2<f64>,
}

impl LinearSmoother {
    pub fn trace(&self) -> f64 {
        self.matrix.diag().sum()
    }
}

impl ResponseFitter for LinearSmoother {
    fn fitted_values(&self, _x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        if self.matrix.ncols() != y.len() {
            return Err(RgamError::DimensionMismatch {
                expected: self.matrix.ncols(),
                found: y.len(),
            });
        }
        Ok(self.matrix.dot(&y))
    }
}

/// RGAM with the Step-3 penalty fixed at zero, so the final fit is least
/// squares on the linear and non-linear columns. Step 1 follows
/// `config.step1_lambda`.
#[derive(Debug, Clone)]
pub struct UnpenalizedRgam {
    pub config: RgamConfig,
}

impl UnpenalizedRgam {
    /// Unpenalized RGAM with a cross-validated Step 1.
    pub fn rgam(seed: u64) -> Self {
        Self::from_config(RgamConfig::default().with_seed(seed))
    }

    /// Unpenalized RGAM_SEL with a cross-validated Step 1.
    pub fn rgam_sel(seed: u64) -> Self {
        Self::from_config(RgamConfig::sel().with_seed(seed))
    }

    pub fn from_config(mut config: RgamConfig) -> Self {
        config.step3_lambda = Some(LambdaPath::from_values(vec![0.0]).expect("zero is a valid path"));
        Self { config }
    }

    /// Also fixes the Step-1 penalty at zero.
    pub fn with_unpenalized_step1(mut self) -> Self {
        self.config.step1_lambda = Step1Lambda::Fixed(0.0);
        self
    }

    /// Upper bound on the Step-3 column count for a design with `p` features.
    pub fn max_columns(&self, p: usize) -> usize {
        p + match &self.config.init_nz {
            InitNonzero::Explicit(idx) => idx.len(),
            _ => p,
        }
    }
}

impl ResponseFitter for UnpenalizedRgam {
    fn fitted_values(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_unpenalized_dims(self, x)?;
        let d = Dataset::new(x.to_owned(), y.to_owned(), Family::Gaussian)?;
        let model = fit_rgam(&d, &self.config)?;
        model.predict(x, 0, Scale::Response)
    }
}

/// Checks up front that an unpenalized RGAM fit on `x` can be identifiable.
pub fn check_unpenalized_dims(fitter: &UnpenalizedRgam, x: ArrayView2<f64>) -> Result<()> {
    let (n, p) = x.dim();
    let cols = fitter.max_columns(p);
    if cols + 1 >= n {
        return Err(RgamError::InvalidInput(format!(
            "unpenalized RGAM may use up to {cols} columns plus an intercept but the design has only {n} rows"
        )));
    }
    Ok(())
}

