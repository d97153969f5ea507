//! Lasso and L1-penalized GLM paths by coordinate descent.
//!
//! Gaussian responses are centered and fit by plain coordinate descent.
//! Binomial and Poisson responses are fit by IRLS: each outer iteration forms
//! the working response and weights of the current fit and hands a weighted
//! lasso problem (with an unpenalized intercept) to the same coordinate
//! descent kernel. Solutions are warm-started along the path.
//!
//! Columns are centered and divided by their population sd before fitting
//! (or by caller-supplied divisors); coefficients are reported on the
//! original scale.

mod cd;
mod path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{mean, Dataset};
use crate::error::{Result, RgamError};
use crate::family::{Family, Scale};

pub(crate) use cd::Design;
pub use path::{default_min_ratio, make_lambda_path, LambdaPath, DEFAULT_NLAMBDA};

/// How columns are scaled before the penalty is applied.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnScaling {
    /// Divide every column by its population sd.
    #[default]
    Standardize,
    /// Divide column `j` by the given value. Columns are still centered.
    Divisors(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// `true` marks a penalized column. Defaults to all penalized.
    pub penalty_mask: Option<Vec<bool>>,
    pub scaling: ColumnScaling,
    /// Coordinate descent stops when no standardized coefficient moves by more
    /// than this in a full sweep.
    pub tol: f64,
    pub max_sweeps: usize,
    pub irls_max_iter: usize,
    pub weight_floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            penalty_mask: None,
            scaling: ColumnScaling::Standardize,
            tol: 1e-7,
            max_sweeps: 100_000,
            irls_max_iter: 25,
            weight_floor: 1e-5,
        }
    }
}

/// Coefficients along a penalty path, on the original feature scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLinearModel {
    pub family: Family,
    pub lambda: LambdaPath,
    /// `m x q` coefficient matrix, one row per penalty value.
    pub beta: Array2<f64>,
    pub intercepts: Vec<f64>,
    /// Mean deviance of the intercept-only model.
    pub null_deviance: f64,
    /// Mean training deviance at each penalty value.
    pub deviances: Vec<f64>,
    pub column_means: Vec<f64>,
    pub column_scales: Vec<f64>,
    pub excluded: Vec<bool>,
    pub penalized: Vec<bool>,
    /// Number of observations the model was fit on.
    pub n_obs: usize,
}

impl FittedLinearModel {
    pub fn n_lambda(&self) -> usize {
        self.lambda.len()
    }

    pub fn n_features(&self) -> usize {
        self.beta.ncols()
    }

    pub fn coefficients(&self, lambda_index: usize) -> ArrayView1<'_, f64> {
        self.beta.row(lambda_index)
    }

    pub fn intercept(&self, lambda_index: usize) -> f64 {
        self.intercepts[lambda_index]
    }

    /// Coefficients on the scaled design the solver worked with.
    pub fn scaled_coefficients(&self, lambda_index: usize) -> Vec<f64> {
        self.beta
            .row(lambda_index)
            .iter()
            .zip(&self.column_scales)
            .map(|(b, s)| b * s)
            .collect()
    }

    /// Indices of nonzero coefficients at a penalty value.
    pub fn nonzero(&self, lambda_index: usize) -> Vec<usize> {
        self.beta
            .row(lambda_index)
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn linear_predictor(&self, x_new: ArrayView2<f64>, lambda_index: usize) -> Result<Array1<f64>> {
        if x_new.ncols() != self.n_features() {
            return Err(RgamError::DimensionMismatch {
                expected: self.n_features(),
                found: x_new.ncols(),
            });
        }
        if lambda_index >= self.n_lambda() {
            return Err(RgamError::InvalidInput(format!(
                "lambda index {lambda_index} out of range (path has {} values)",
                self.n_lambda()
            )));
        }
        Ok(x_new.dot(&self.beta.row(lambda_index)) + self.intercepts[lambda_index])
    }

    pub fn predict(&self, x_new: ArrayView2<f64>, lambda_index: usize, scale: Scale) -> Result<Array1<f64>> {
        let eta = self.linear_predictor(x_new, lambda_index)?;
        Ok(match scale {
            Scale::Link => eta,
            Scale::Response => eta.mapv(|e| self.family.inverse_link(e)),
        })
    }
}

/// Predictions of a fitted path at one penalty value.
pub fn predict_linear(
    model: &FittedLinearModel,
    x_new: ArrayView2<f64>,
    lambda_index: usize,
    scale: Scale,
) -> Result<Array1<f64>> {
    model.predict(x_new, lambda_index, scale)
}

struct Engine<'a> {
    design: Design,
    y: &'a [f64],
    family: Family,
    penalized: Vec<bool>,
    opts: &'a SolverOptions,
}

struct State {
    beta: Vec<f64>,
    b0: f64,
}

impl<'a> Engine<'a> {
    fn new(d: &'a Dataset, opts: &'a SolverOptions) -> Result<Self> {
        let design = Design::new(d.x(), &opts.scaling)?;
        let penalized = match &opts.penalty_mask {
            None => vec![true; d.p()],
            Some(m) if m.len() == d.p() => m.clone(),
            Some(m) => {
                return Err(RgamError::DimensionMismatch {
                    expected: d.p(),
                    found: m.len(),
                })
            }
        };
        let y = d.y_slice();
        if d.family() != Family::Gaussian {
            let ybar = mean(y);
            if ybar <= 0.0 || (d.family() == Family::Binomial && ybar >= 1.0) {
                return Err(RgamError::InvalidInput(format!(
                    "{} response is constant ({ybar}); the null model is degenerate",
                    d.family()
                )));
            }
        }
        Ok(Self {
            design,
            y,
            family: d.family(),
            penalized,
            opts,
        })
    }

    fn y_mean(&self) -> f64 {
        mean(self.y)
    }

    fn initial_state(&self) -> State {
        let b0 = match self.family {
            Family::Gaussian => 0.0,
            fam => fam.link(self.y_mean()),
        };
        State {
            beta: vec![0.0; self.design.p()],
            b0,
        }
    }

    /// Fitted means on the response scale.
    fn mu(&self, st: &State) -> Vec<f64> {
        let eta = self.design.linear_predictor(&st.beta, st.b0);
        match self.family {
            Family::Gaussian => {
                let ybar = self.y_mean();
                eta.into_iter().map(|e| e + ybar).collect()
            }
            fam => eta.into_iter().map(|e| fam.inverse_link(e)).collect(),
        }
    }

    fn deviance(&self, st: &State) -> f64 {
        self.family.mean_deviance(self.y, &self.mu(st))
    }

    fn solve_at(&self, st: &mut State, lambda: f64, lambda_index: usize) -> Result<()> {
        let no_conv = |sweeps| RgamError::NoConvergence {
            lambda_index,
            sweeps,
        };
        match self.family {
            Family::Gaussian => {
                let ybar = self.y_mean();
                let z: Vec<f64> = self.y.iter().map(|v| v - ybar).collect();
                let problem = cd::Problem {
                    design: &self.design,
                    penalized: &self.penalized,
                    weights: None,
                };
                problem
                    .solve(&z, &mut st.beta, None, lambda, self.opts.tol, self.opts.max_sweeps)
                    .map_err(no_conv)?;
            }
            fam => {
                for _ in 0..self.opts.irls_max_iter {
                    let eta = self.design.linear_predictor(&st.beta, st.b0);
                    let mut w = Vec::with_capacity(eta.len());
                    let mut z = Vec::with_capacity(eta.len());
                    for (&e, &yi) in eta.iter().zip(self.y) {
                        let mu = fam.inverse_link(e);
                        let wi = fam.variance(mu).max(self.opts.weight_floor);
                        w.push(wi);
                        z.push(e + (yi - mu) / wi);
                    }
                    let before = st.beta.clone();
                    let b0_before = st.b0;
                    let problem = cd::Problem {
                        design: &self.design,
                        penalized: &self.penalized,
                        weights: Some(&w),
                    };
                    problem
                        .solve(&z, &mut st.beta, Some(&mut st.b0), lambda, self.opts.tol, self.opts.max_sweeps)
                        .map_err(no_conv)?;
                    let eta = self.design.linear_predictor(&st.beta, st.b0);
                    if let Some(bad) = eta.iter().find(|e| !e.is_finite() || fam.inverse_link(**e).is_infinite()) {
                        return Err(RgamError::Divergence {
                            lambda_index,
                            reason: format!("linear predictor reached {bad}"),
                        });
                    }
                    let change = before
                        .iter()
                        .zip(&st.beta)
                        .map(|(a, b)| (a - b).abs())
                        .fold((b0_before - st.b0).abs(), f64::max);
                    if change < self.opts.tol {
                        break;
                    }
                }
            }
        }
        let dev = self.deviance(st);
        if !dev.is_finite() {
            return Err(RgamError::Divergence {
                lambda_index,
                reason: "non-finite deviance".into(),
            });
        }
        Ok(())
    }

    /// Gradient of the loss at the fit with every penalized coefficient at 0.
    fn null_gradient(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut st = self.initial_state();
        if self.penalized.iter().zip(&self.design.excluded).any(|(p, e)| !p && !e) {
            self.solve_at(&mut st, f64::INFINITY, 0)?;
        }
        let resid: Vec<f64> = self.y.iter().zip(self.mu(&st)).map(|(y, m)| y - m).collect();
        Ok((self.design.gradient(&resid), resid))
    }

    fn original_scale(&self, st: &State) -> (Vec<f64>, f64) {
        let d = &self.design;
        let mut intercept = st.b0
            + match self.family {
                Family::Gaussian => self.y_mean(),
                _ => 0.0,
            };
        let beta = st
            .beta
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                if d.excluded[j] || b == 0.0 {
                    0.0
                } else {
                    let orig = b / d.scales[j];
                    intercept -= orig * d.means[j];
                    orig
                }
            })
            .collect();
        (beta, intercept)
    }
}

/// The default path for a dataset: `lambda_max` is the largest absolute
/// gradient over penalized columns at the unpenalized null fit.
pub fn default_lambda_path(
    d: &Dataset,
    opts: &SolverOptions,
    nlambda: usize,
    min_ratio: Option<f64>,
) -> Result<LambdaPath> {
    let engine = Engine::new(d, opts)?;
    let (grad, resid) = engine.null_gradient()?;
    let lambda_max = grad
        .iter()
        .zip(&engine.penalized)
        .filter(|(_, &p)| p)
        .map(|(g, _)| g.abs())
        .fold(0.0, f64::max);
    path::check_lambda_max(lambda_max, ArrayView1::from(&resid))?;
    let ratio = min_ratio.unwrap_or_else(|| default_min_ratio(d.n(), d.p()));
    LambdaPath::log_spaced(lambda_max, nlambda, ratio)
}

/// Fits the penalized path, warm-starting each penalty value from the previous
/// solution.
pub fn fit_lasso_path(d: &Dataset, path: &LambdaPath, opts: &SolverOptions) -> Result<FittedLinearModel> {
    let engine = Engine::new(d, opts)?;
    let p = d.p();
    let m = path.len();
    let mut st = engine.initial_state();
    let null_deviance = engine.deviance(&st);
    // above this every penalized coefficient is exactly zero
    let (grad, _) = engine.null_gradient()?;
    let entry = grad
        .iter()
        .zip(&engine.penalized)
        .filter(|(_, &p)| p)
        .map(|(g, _)| g.abs())
        .fold(0.0, f64::max);
    let mut beta = Array2::zeros((m, p));
    let mut intercepts = Vec::with_capacity(m);
    let mut deviances = Vec::with_capacity(m);
    for (k, &lambda) in path.values().iter().enumerate() {
        let effective = if lambda >= entry { f64::INFINITY } else { lambda };
        engine.solve_at(&mut st, effective, k)?;
        let (b, i) = engine.original_scale(&st);
        beta.row_mut(k).assign(&ArrayView1::from(&b));
        intercepts.push(i);
        deviances.push(engine.deviance(&st));
    }
    Ok(FittedLinearModel {
        family: d.family(),
        lambda: path.clone(),
        beta,
        intercepts,
        null_deviance,
        deviances,
        column_means: engine.design.means.clone(),
        column_scales: engine.design.scales.clone(),
        excluded: engine.design.excluded.clone(),
        penalized: engine.penalized.clone(),
        n_obs: d.n(),
    })
}

/// Builds the default path and fits it.
pub fn fit_lasso(
    d: &Dataset,
    opts: &SolverOptions,
    nlambda: usize,
    min_ratio: Option<f64>,
) -> Result<FittedLinearModel> {
    let path = default_lambda_path(d, opts, nlambda, min_ratio)?;
    fit_lasso_path(d, &path, opts)
}
