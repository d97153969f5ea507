//! Reluctant generalized additive models.
//!
//! 1. Fit a cross-validated lasso of `y` on `X` and take its residual `r`.
//! 2. For each candidate feature `j`, smooth `r` on `X_j` with a spline of
//!    `df` effective degrees of freedom and rescale the fitted curve so that
//!    `sd(F_j) = gamma * mean_k sd(X_k)`.
//! 3. Fit a lasso path of `y` on `[X F]`.
//!
//! Candidates are every feature (RGAM) or only the Step-1 active set
//! (RGAM_SEL, `init_nz = None`). Because the non-linear columns are small,
//! a non-linear term only enters when it carries signal the linear terms
//! cannot.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::{cv_fit, CvResult, LassoFitter, Metric, PathFitter, PathModel, Selection};
use crate::data::{sample_sd, write_atomic, Dataset, ZERO_VARIANCE_TOL};
use crate::error::{Result, RgamError};
use crate::family::{Family, Scale};
use crate::lasso::{self, ColumnScaling, FittedLinearModel, LambdaPath, SolverOptions, DEFAULT_NLAMBDA};
use crate::spline::{self, SmoothingSplineFit};

/// Format version of serialized models.
pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_GAMMA: f64 = 0.6;
/// Default gamma when non-linear features are built for the active set only.
pub const DEFAULT_GAMMA_SEL: f64 = 0.8;
pub const DEFAULT_DF: f64 = 4.0;
pub const DEFAULT_NFOLDS: usize = 5;

/// Features that always get a non-linear candidate, in addition to the
/// Step-1 active set. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitNonzero {
    #[default]
    All,
    None,
    Explicit(Vec<usize>),
}

impl InitNonzero {
    /// Parses `all`, `none`, or a comma-separated list of 1-based indices.
    pub fn parse_one_based(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(InitNonzero::All),
            "none" | "" => Ok(InitNonzero::None),
            list => {
                let idx = list
                    .split(',')
                    .map(|t| match t.trim().parse::<usize>() {
                        Ok(v) if v >= 1 => Ok(v - 1),
                        _ => Err(RgamError::InvalidConfig(format!(
                            "init-nz entries must be positive integers, got `{}`",
                            t.trim()
                        ))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(InitNonzero::Explicit(idx))
            }
        }
    }
}

/// Which Step-1 penalty defines the residual.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step1Lambda {
    /// Minimum mean cross-validated deviance.
    #[default]
    CvMin,
    /// Largest penalty within one standard error of the minimum.
    Cv1se,
    /// A fixed penalty, no cross-validation.
    Fixed(f64),
}

/// How the Step-3 solver scales `[X F]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step3Scaling {
    /// Linear columns are divided by their own sd, non-linear columns by
    /// `mean_k sd(X_k)`, so the non-linear columns keep their relative size
    /// `gamma` inside the penalty.
    #[default]
    PreserveRelative,
    /// Every column of `[X F]` is standardized, which undoes the gamma
    /// rescaling for any `gamma > 0`.
    Restandardize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgamConfig {
    /// Relative size of the non-linear columns. `None` picks 0.6, or 0.8 when
    /// `init_nz` is `None`.
    pub gamma: Option<f64>,
    /// Effective degrees of freedom of each spline.
    pub df: f64,
    pub init_nz: InitNonzero,
    pub nfolds_step1: usize,
    pub step1_lambda: Step1Lambda,
    pub nlambda: usize,
    pub lambda_min_ratio: Option<f64>,
    /// Fixed Step-3 path; computed from `[X F]` when absent.
    pub step3_lambda: Option<LambdaPath>,
    pub step3_scaling: Step3Scaling,
    /// Coordinate descent tolerance for both lasso fits.
    pub tol: f64,
    /// Seeds the Step-1 fold assignment.
    pub seed: u64,
}

impl Default for RgamConfig {
    fn default() -> Self {
        Self {
            gamma: None,
            df: DEFAULT_DF,
            init_nz: InitNonzero::All,
            nfolds_step1: DEFAULT_NFOLDS,
            step1_lambda: Step1Lambda::CvMin,
            nlambda: DEFAULT_NLAMBDA,
            lambda_min_ratio: None,
            step3_lambda: None,
            step3_scaling: Step3Scaling::PreserveRelative,
            tol: SolverOptions::default().tol,
            seed: 0,
        }
    }
}

impl RgamConfig {
    /// RGAM_SEL: non-linear candidates only for the Step-1 active set.
    pub fn sel() -> Self {
        Self {
            init_nz: InitNonzero::None,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn resolved_gamma(&self) -> f64 {
        self.gamma.unwrap_or(match self.init_nz {
            InitNonzero::None => DEFAULT_GAMMA_SEL,
            _ => DEFAULT_GAMMA,
        })
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let gamma = self.resolved_gamma();
        if !(0.0..=1.0).contains(&gamma) {
            return Err(RgamError::InvalidConfig(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        if !(self.df.is_finite() && self.df >= 2.0) {
            return Err(RgamError::InvalidConfig(format!("df must be at least 2, got {}", self.df)));
        }
        if let InitNonzero::Explicit(idx) = &self.init_nz {
            if let Some(bad) = idx.iter().find(|&&j| j >= p) {
                return Err(RgamError::InvalidConfig(format!(
                    "init_nz index {} out of range [1, {p}]",
                    bad + 1
                )));
            }
        }
        if self.nfolds_step1 < 2 && !matches!(self.step1_lambda, Step1Lambda::Fixed(_)) {
            return Err(RgamError::InvalidConfig(format!(
                "step-1 cross-validation needs at least 2 folds, got {}",
                self.nfolds_step1
            )));
        }
        if let Step1Lambda::Fixed(v) = self.step1_lambda {
            if !(v.is_finite() && v >= 0.0) {
                return Err(RgamError::InvalidConfig(format!("step-1 lambda must be non-negative, got {v}")));
            }
        }
        if self.nlambda < 2 {
            return Err(RgamError::InvalidConfig(format!("nlambda must be at least 2, got {}", self.nlambda)));
        }
        Ok(())
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            ..SolverOptions::default()
        }
    }
}

/// One Step-2 feature: `scale_factor * spline(x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFeature {
    /// 0-based column of `X`.
    pub feature_index: usize,
    /// Absent when the column has fewer than 4 distinct values.
    pub spline: Option<SmoothingSplineFit>,
    pub scale_factor: f64,
    /// Inactive features contribute no column to Step 3.
    pub active: bool,
}

impl SplineFeature {
    pub fn column(&self, x_j: &[f64]) -> Vec<f64> {
        match &self.spline {
            Some(fit) if self.active => fit.evaluate(x_j).into_iter().map(|v| v * self.scale_factor).collect(),
            _ => vec![0.0; x_j.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgamModel {
    pub version: u32,
    pub family: Family,
    pub config: RgamConfig,
    /// Gamma actually used.
    pub gamma: f64,
    pub step1_model: FittedLinearModel,
    pub step1_lambda_index: usize,
    pub step1_lambda: f64,
    pub step1_cv: Option<CvResult>,
    /// Step-1 residual on the response scale.
    pub residual: Vec<f64>,
    /// 0-based features with a nonzero Step-1 coefficient.
    pub active_set: Vec<usize>,
    pub spline_bank: Vec<SplineFeature>,
    /// `mean_k sd(X_k)` on the training data.
    pub feature_sd_mean: f64,
    /// Lasso over `[X F]`: the first `p` columns are linear, the rest follow
    /// the active entries of `spline_bank` in order.
    pub step3_model: FittedLinearModel,
    /// Set when no spline feature survived; the model is then a plain lasso.
    pub no_spline_features: bool,
}

impl RgamModel {
    pub fn n_features(&self) -> usize {
        self.step1_model.n_features()
    }

    pub fn n_lambda(&self) -> usize {
        self.step3_model.n_lambda()
    }

    pub fn lambda(&self) -> &LambdaPath {
        &self.step3_model.lambda
    }

    pub fn active_splines(&self) -> impl Iterator<Item = &SplineFeature> {
        self.spline_bank.iter().filter(|f| f.active)
    }

    /// Non-linear columns `F` evaluated at `x_new`.
    pub fn nonlinear_columns(&self, x_new: ArrayView2<f64>) -> Result<Array2<f64>> {
        let p = self.n_features();
        if x_new.ncols() != p {
            return Err(RgamError::DimensionMismatch {
                expected: p,
                found: x_new.ncols(),
            });
        }
        let active: Vec<&SplineFeature> = self.active_splines().collect();
        let mut f = Array2::zeros((x_new.nrows(), active.len()));
        for (c, feat) in active.iter().enumerate() {
            let col = x_new.column(feat.feature_index).to_vec();
            f.column_mut(c).assign(&Array1::from(feat.column(&col)));
        }
        Ok(f)
    }

    /// `[x_new F(x_new)]`.
    pub fn expanded_design(&self, x_new: ArrayView2<f64>) -> Result<Array2<f64>> {
        let f = self.nonlinear_columns(x_new)?;
        let p = self.n_features();
        let mut z = Array2::zeros((x_new.nrows(), p + f.ncols()));
        z.slice_mut(s![.., ..p]).assign(&x_new);
        z.slice_mut(s![.., p..]).assign(&f);
        Ok(z)
    }

    pub fn predict(&self, x_new: ArrayView2<f64>, lambda_index: usize, scale: Scale) -> Result<Array1<f64>> {
        let z = self.expanded_design(x_new)?;
        self.step3_model.predict(z.view(), lambda_index, scale)
    }

    pub fn intercept(&self, lambda_index: usize) -> f64 {
        self.step3_model.intercept(lambda_index)
    }

    /// Linear coefficients, one per feature.
    pub fn linear_coefficients(&self, lambda_index: usize) -> ArrayView1<'_, f64> {
        self.step3_model.beta.slice(s![lambda_index, ..self.n_features()])
    }

    /// `(feature_index, coefficient)` for every active spline feature.
    pub fn nonlinear_coefficients(&self, lambda_index: usize) -> Vec<(usize, f64)> {
        let p = self.n_features();
        self.active_splines()
            .enumerate()
            .map(|(c, f)| (f.feature_index, self.step3_model.beta[[lambda_index, p + c]]))
            .collect()
    }

    pub fn selected_linear(&self, lambda_index: usize) -> Vec<usize> {
        self.linear_coefficients(lambda_index)
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn selected_nonlinear(&self, lambda_index: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .nonlinear_coefficients(lambda_index)
            .into_iter()
            .filter(|(_, b)| *b != 0.0)
            .map(|(j, _)| j)
            .collect();
        out.sort_unstable();
        out
    }

    /// Features with a nonzero linear or non-linear coefficient.
    pub fn selected_features(&self, lambda_index: usize) -> Vec<usize> {
        let mut out = self.selected_linear(lambda_index);
        out.extend(self.selected_nonlinear(lambda_index));
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_str(s)?;
        if header.version != MODEL_VERSION {
            return Err(RgamError::VersionMismatch {
                expected: MODEL_VERSION,
                found: header.version,
            });
        }
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RgamError::io(path, e))?;
        Self::from_json(&text)
    }
}

impl PathModel for RgamModel {
    fn lambda(&self) -> &LambdaPath {
        RgamModel::lambda(self)
    }

    fn predict(&self, x_new: ArrayView2<f64>, lambda_index: usize, scale: Scale) -> Result<Array1<f64>> {
        RgamModel::predict(self, x_new, lambda_index, scale)
    }

    fn selection(&self, lambda_index: usize) -> Selection {
        Selection {
            linear: self.selected_linear(lambda_index),
            nonlinear: self.selected_nonlinear(lambda_index),
        }
    }
}

/// Fits RGAM with a given configuration; a supplied path replaces the Step-3
/// path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RgamFitter {
    pub config: RgamConfig,
}

impl PathFitter for RgamFitter {
    type Model = RgamModel;

    fn fit(&self, d: &Dataset, path: Option<&LambdaPath>) -> Result<RgamModel> {
        match path {
            Some(p) => {
                let cfg = RgamConfig {
                    step3_lambda: Some(p.clone()),
                    ..self.config.clone()
                };
                fit_rgam(d, &cfg)
            }
            None => fit_rgam(d, &self.config),
        }
    }
}

/// Features that get a non-linear candidate: `init_nz` together with the
/// Step-1 active set, sorted and 0-based.
pub fn select_nonlinear_candidates(active_set: &[usize], init_nz: &InitNonzero, p: usize) -> Result<Vec<usize>> {
    if let Some(bad) = active_set.iter().find(|&&j| j >= p) {
        return Err(RgamError::InvalidInput(format!("active-set index {bad} out of range for {p} features")));
    }
    let mut out: Vec<usize> = match init_nz {
        InitNonzero::All => return Ok((0..p).collect()),
        InitNonzero::None => active_set.to_vec(),
        InitNonzero::Explicit(list) => {
            if let Some(bad) = list.iter().find(|&&j| j >= p) {
                return Err(RgamError::InvalidInput(format!("init_nz index {bad} out of range for {p} features")));
            }
            list.iter().chain(active_set).copied().collect()
        }
    };
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Step-1 residual on the response scale: `y - mu_hat`.
pub fn compute_residual(y: ArrayView1<f64>, fitted_link: ArrayView1<f64>, family: Family) -> Array1<f64> {
    let mut r = y.to_owned();
    r.iter_mut()
        .zip(fitted_link.iter())
        .for_each(|(v, &eta)| *v -= family.inverse_link(eta));
    r
}

fn fit_feature(j: usize, x_j: &[f64], residual: &[f64], df: f64, gamma: f64, sd_mean: f64) -> Result<SplineFeature> {
    let inactive = |spline| SplineFeature {
        feature_index: j,
        spline,
        scale_factor: 0.0,
        active: false,
    };
    let m = spline::unique_count(x_j);
    if m < 4 {
        return Ok(inactive(None));
    }
    let fit = spline::fit_smoothing_spline(x_j, residual, df.min(m as f64))?;
    let sd = sample_sd(&fit.evaluate(x_j));
    if sd < ZERO_VARIANCE_TOL {
        return Ok(inactive(Some(fit)));
    }
    Ok(SplineFeature {
        feature_index: j,
        spline: Some(fit),
        scale_factor: gamma * sd_mean / sd,
        active: true,
    })
}

/// Runs the three RGAM steps.
pub fn fit_rgam(d: &Dataset, config: &RgamConfig) -> Result<RgamModel> {
    let (n, p) = (d.n(), d.p());
    config.validate(p)?;
    let gamma = config.resolved_gamma();
    let opts = config.solver();

    // Step 1
    let lasso_fitter = LassoFitter {
        opts: opts.clone(),
        nlambda: config.nlambda,
        min_ratio: config.lambda_min_ratio,
    };
    let (step1_model, step1_lambda_index, step1_cv) = match config.step1_lambda {
        Step1Lambda::Fixed(v) => {
            let path = LambdaPath::from_values(vec![v])?;
            (lasso::fit_lasso_path(d, &path, &opts)?, 0, None)
        }
        choice => {
            let fit = cv_fit(d, &lasso_fitter, config.nfolds_step1, Metric::Deviance, config.seed)?;
            let idx = if choice == Step1Lambda::Cv1se {
                fit.cv.lambda_1se_index
            } else {
                fit.cv.lambda_min_index
            };
            (fit.model, idx, Some(fit.cv))
        }
    };
    let eta = step1_model.linear_predictor(d.x(), step1_lambda_index)?;
    let residual = compute_residual(d.y(), eta.view(), d.family()).to_vec();
    let active_set = step1_model.nonzero(step1_lambda_index);

    // Step 2
    let candidates = select_nonlinear_candidates(&active_set, &config.init_nz, p)?;
    let sds: Vec<f64> = d.x().columns().into_iter().map(|c| sample_sd(&c.to_vec())).collect();
    let feature_sd_mean = sds.iter().sum::<f64>() / p as f64;
    let spline_bank = candidates
        .par_iter()
        .map(|&j| {
            let x_j = d.x().column(j).to_vec();
            fit_feature(j, &x_j, &residual, config.df, gamma, feature_sd_mean)
        })
        .collect::<Result<Vec<_>>>()?;

    // Step 3
    let active: Vec<&SplineFeature> = spline_bank.iter().filter(|f| f.active).collect();
    let mut z = Array2::zeros((n, p + active.len()));
    z.slice_mut(s![.., ..p]).assign(&d.x());
    for (c, feat) in active.iter().enumerate() {
        let x_j = d.x().column(feat.feature_index).to_vec();
        z.column_mut(p + c).assign(&Array1::from(feat.column(&x_j)));
    }
    let scaling = match config.step3_scaling {
        Step3Scaling::Restandardize => ColumnScaling::Standardize,
        Step3Scaling::PreserveRelative => {
            let mut div = sds.clone();
            div.extend(std::iter::repeat_n(feature_sd_mean, active.len()));
            ColumnScaling::Divisors(div)
        }
    };
    let step3_opts = SolverOptions { scaling, ..opts };
    let zd = Dataset::new(z, d.y().to_owned(), d.family())?;
    let path = match &config.step3_lambda {
        Some(path) => path.clone(),
        None => lasso::default_lambda_path(&zd, &step3_opts, config.nlambda, config.lambda_min_ratio)?,
    };
    let step3_model = lasso::fit_lasso_path(&zd, &path, &step3_opts)?;
    let no_spline_features = active.is_empty();

    Ok(RgamModel {
        version: MODEL_VERSION,
        family: d.family(),
        config: RgamConfig {
            gamma: Some(gamma),
            ..config.clone()
        },
        gamma,
        step1_lambda: step1_model.lambda.values()[step1_lambda_index],
        step1_model,
        step1_lambda_index,
        step1_cv,
        residual,
        active_set,
        spline_bank,
        feature_sd_mean,
        step3_model,
        no_spline_features,
    })
}

/// Predictions of a fitted RGAM model at one Step-3 penalty value.
pub fn predict_rgam(model: &RgamModel, x_new: ArrayView2<f64>, lambda_index: usize, scale: Scale) -> Result<Array1<f64>> {
    model.predict(x_new, lambda_index, scale)
}
