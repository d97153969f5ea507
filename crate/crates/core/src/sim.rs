//! Synthetic additive-signal scenarios and the benchmark harness.
//!
//! Features are i.i.d. Unif[-1, 1]. Signals are built from the orthogonal
//! polynomials `x`, `3x^2 - 1` and `5x^3 - 3x` (variances 1/3, 4/5 and 4/7),
//! so component variances add and the noise level for a requested SNR is
//! known in closed form.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::{cv_fit, LassoFitter, Metric, NullFitter, PathFitter, PathModel};
use crate::data::{mean, write_atomic, Dataset};
use crate::error::{Result, RgamError};
use crate::family::{Family, Scale};
use crate::rgam::{RgamConfig, RgamFitter};

pub const DEFAULT_N_TEST: usize = 5000;
pub const DEFAULT_REPLICATES: usize = 10;
pub const DEFAULT_SNRS: [f64; 3] = [1.0, 2.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// `x`
    Linear,
    /// `3x^2 - 1`
    Quadratic,
    /// `5x^3 - 3x`
    Cubic,
}

impl Basis {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Basis::Linear => x,
            Basis::Quadratic => 3.0 * x * x - 1.0,
            Basis::Cubic => 5.0 * x * x * x - 3.0 * x,
        }
    }

    /// Variance under Unif[-1, 1] (all three have mean zero).
    pub fn variance(self) -> f64 {
        match self {
            Basis::Linear => 1.0 / 3.0,
            Basis::Quadratic => 4.0 / 5.0,
            Basis::Cubic => 4.0 / 7.0,
        }
    }
}

/// One additive term `coef * basis(x_feature)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub feature: usize,
    pub basis: Basis,
    pub coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Linear,
    Hier,
    Nonlinear,
    Nonhier,
    Mixed,
    MixedLarge,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Linear,
        Scenario::Hier,
        Scenario::Nonlinear,
        Scenario::Nonhier,
        Scenario::Mixed,
        Scenario::MixedLarge,
    ];

    /// The desk-scale set: everything but `mixed_large`.
    pub const QUICK: [Scenario; 5] = [
        Scenario::Linear,
        Scenario::Hier,
        Scenario::Nonlinear,
        Scenario::Nonhier,
        Scenario::Mixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Linear => "linear",
            Scenario::Hier => "hier",
            Scenario::Nonlinear => "nonlinear",
            Scenario::Nonhier => "nonhier",
            Scenario::Mixed => "mixed",
            Scenario::MixedLarge => "mixed_large",
        }
    }

    /// Default `(n, p)`.
    pub fn dims(self) -> (usize, usize) {
        match self {
            Scenario::MixedLarge => (1000, 500),
            _ => (100, 200),
        }
    }

    pub fn terms(self) -> Vec<Term> {
        let t = |feature, basis, coef| Term { feature, basis, coef };
        let mut out = Vec::new();
        match self {
            Scenario::Linear => out.extend((0..10).map(|j| t(j, Basis::Linear, 1.0))),
            Scenario::Hier => {
                for j in 0..5 {
                    out.push(t(j, Basis::Linear, 1.0));
                    out.push(t(j, Basis::Quadratic, 2.0 / 3.0));
                }
            }
            Scenario::Nonlinear => out.extend((0..5).map(|j| t(j, Basis::Cubic, 2.0))),
            Scenario::Nonhier => {
                out.extend((0..5).map(|j| t(j, Basis::Linear, 1.0)));
                out.extend((5..10).map(|j| t(j, Basis::Quadratic, 2.0 / 3.0)));
            }
            Scenario::Mixed => {
                for j in 0..5 {
                    out.push(t(j, Basis::Linear, 1.0));
                    out.push(t(j, Basis::Cubic, 0.75));
                }
                out.extend((5..8).map(|j| t(j, Basis::Quadratic, 0.85)));
            }
            Scenario::MixedLarge => {
                for j in 0..20 {
                    out.push(t(j, Basis::Linear, 1.0));
                    out.push(t(j, Basis::Cubic, 0.75));
                }
                out.extend((20..28).map(|j| t(j, Basis::Quadratic, 1.0)));
            }
        }
        out
    }

    pub fn signal(self, row: ArrayView1<f64>) -> f64 {
        self.terms().iter().map(|t| t.coef * t.basis.eval(row[t.feature])).sum()
    }

    /// Closed-form `Var(mu)`: the terms are uncorrelated.
    pub fn signal_variance(self) -> f64 {
        self.terms().iter().map(|t| t.coef * t.coef * t.basis.variance()).sum()
    }

    /// Variance contributed by the linear and the non-linear terms.
    pub fn component_variances(self) -> (f64, f64) {
        self.terms().iter().fold((0.0, 0.0), |(lin, nl), t| {
            let v = t.coef * t.coef * t.basis.variance();
            if t.basis == Basis::Linear {
                (lin + v, nl)
            } else {
                (lin, nl + v)
            }
        })
    }

    /// Features the signal depends on, sorted.
    pub fn true_support(self) -> Vec<usize> {
        let mut s: Vec<usize> = self.terms().iter().map(|t| t.feature).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    fn id(self) -> u64 {
        Scenario::ALL.iter().position(|&s| s == self).unwrap() as u64
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = RgamError;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                RgamError::InvalidConfig(format!(
                    "unknown scenario `{s}` (expected linear, hier, nonlinear, nonhier, mixed or mixed_large)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub p: usize,
    pub snr: f64,
    pub n_test: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, snr: f64, seed: u64) -> Self {
        let (n, p) = scenario.dims();
        Self {
            scenario,
            n,
            p,
            snr,
            n_test: DEFAULT_N_TEST,
            seed,
        }
    }

    /// Noise variance giving the requested SNR.
    pub fn sigma2(&self) -> f64 {
        self.scenario.signal_variance() / self.snr
    }

    fn validate(&self) -> Result<()> {
        let need = self.scenario.true_support().last().map_or(0, |j| j + 1);
        if self.p < need {
            return Err(RgamError::InvalidConfig(format!(
                "scenario {} needs at least {need} features, got {}",
                self.scenario, self.p
            )));
        }
        if !(self.snr.is_finite() && self.snr > 0.0) {
            return Err(RgamError::InvalidConfig(format!("snr must be positive, got {}", self.snr)));
        }
        if self.n < 10 || self.n_test < 1 {
            return Err(RgamError::InvalidConfig("need n >= 10 and n_test >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimData {
    pub train: Dataset,
    pub train_mu: Array1<f64>,
    pub test_x: Array2<f64>,
    pub test_mu: Array1<f64>,
    pub sigma: f64,
    pub support: Vec<usize>,
}

/// Draws a training set, a test set and the true signal on both.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<SimData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sigma = spec.sigma2().sqrt();
    let x = Array2::from_shape_fn((spec.n, spec.p), |_| rng.random_range(-1.0..=1.0));
    let train_mu = Array1::from_iter(x.rows().into_iter().map(|r| spec.scenario.signal(r)));
    let y = Array1::from_iter(
        train_mu
            .iter()
            .map(|m| m + sigma * rng.sample::<f64, _>(StandardNormal)),
    );
    let test_x = Array2::from_shape_fn((spec.n_test, spec.p), |_| rng.random_range(-1.0..=1.0));
    let test_mu = Array1::from_iter(test_x.rows().into_iter().map(|r| spec.scenario.signal(r)));
    Ok(SimData {
        train: Dataset::new(x, y, Family::Gaussian)?,
        train_mu,
        test_x,
        test_mu,
        sigma,
        support: spec.scenario.true_support(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Null,
    Lasso,
    Rgam,
    RgamSel,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Null, Method::Lasso, Method::Rgam, Method::RgamSel];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Null => "null",
            Method::Lasso => "lasso",
            Method::Rgam => "rgam",
            Method::RgamSel => "rgam_sel",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = RgamError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                RgamError::InvalidConfig(format!("unknown method `{s}` (expected null, lasso, rgam or rgam_sel)"))
            })
    }
}

/// One benchmark row. Metrics are NaN when the fit failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub scenario: Scenario,
    pub snr: f64,
    pub method: Method,
    pub replicate: usize,
    pub seed: u64,
    /// `mean((yhat - mu)^2) / mean((ybar_train - mu)^2)` on the test set.
    pub relative_test_error: f64,
    pub test_mse: f64,
    pub n_selected_features: usize,
    pub n_selected_linear: usize,
    pub n_selected_nonlinear: usize,
    pub n_true_features_recovered: usize,
    pub lambda_index: usize,
    pub lambda: f64,
    pub error: Option<String>,
}

/// Metrics of a fitted model at one path point.
#[derive(Debug, Clone, PartialEq)]
pub struct FitEvaluation {
    pub relative_test_error: f64,
    pub test_mse: f64,
    pub n_selected_features: usize,
    pub n_selected_linear: usize,
    pub n_selected_nonlinear: usize,
    pub n_true_features_recovered: usize,
}

/// Scores `model` against the true test signal. `train_mean` is the null
/// model's prediction.
pub fn evaluate_fit<M: PathModel>(
    model: &M,
    test_x: ArrayView2<f64>,
    test_mu: ArrayView1<f64>,
    lambda_index: usize,
    true_support: &[usize],
    train_mean: f64,
) -> Result<FitEvaluation> {
    if test_x.nrows() != test_mu.len() {
        return Err(RgamError::InvalidInput(format!(
            "{} test rows but {} signal values",
            test_x.nrows(),
            test_mu.len()
        )));
    }
    let pred = model.predict(test_x, lambda_index, Scale::Response)?;
    let mse = mean_sq_diff(pred.iter().copied(), test_mu);
    let null = mean_sq_diff(std::iter::repeat(train_mean), test_mu);
    let sel = model.selection(lambda_index);
    let features = sel.features();
    Ok(FitEvaluation {
        relative_test_error: mse / null,
        test_mse: mse,
        n_selected_features: features.len(),
        n_selected_linear: sel.linear.len(),
        n_selected_nonlinear: sel.nonlinear.len(),
        n_true_features_recovered: features.iter().filter(|j| true_support.contains(j)).count(),
    })
}

fn mean_sq_diff(a: impl Iterator<Item = f64>, b: ArrayView1<f64>) -> f64 {
    a.zip(b.iter()).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / b.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub scenarios: Vec<Scenario>,
    pub snrs: Vec<f64>,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub nfolds: usize,
    /// Overrides the scenario's training size.
    pub n: Option<usize>,
    /// Overrides the scenario's feature count.
    pub p: Option<usize>,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            scenarios: Scenario::QUICK.to_vec(),
            snrs: DEFAULT_SNRS.to_vec(),
            methods: Method::ALL.to_vec(),
            replicates: DEFAULT_REPLICATES,
            nfolds: 5,
            n: None,
            p: None,
            n_test: DEFAULT_N_TEST,
            seed: 0,
        }
    }
}

/// Seed of one (scenario, snr, replicate) cell. Depends only on the master
/// seed and the cell itself, so adding cells never changes existing ones.
pub fn cell_seed(master: u64, scenario: Scenario, snr: f64, replicate: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    let snr_key = (snr * 1000.0).round() as u64 & 0xFF_FFFF;
    rng.set_stream((scenario.id() << 56) | (snr_key << 32) | replicate as u64);
    rng.next_u64()
}

fn fit_and_score<F: PathFitter>(fitter: &F, data: &SimData, nfolds: usize, seed: u64) -> Result<(usize, f64, FitEvaluation)> {
    let fit = cv_fit(&data.train, fitter, nfolds, Metric::Deviance, seed)?;
    let idx = fit.cv.lambda_min_index;
    let eval = evaluate_fit(
        &fit.model,
        data.test_x.view(),
        data.test_mu.view(),
        idx,
        &data.support,
        mean(data.train.y_slice()),
    )?;
    Ok((idx, fit.cv.lambda_min(), eval))
}

/// Fits one method on one simulated dataset with a CV-selected penalty.
pub fn run_method(method: Method, data: &SimData, nfolds: usize, seed: u64) -> Result<(usize, f64, FitEvaluation)> {
    match method {
        Method::Null => {
            let model = NullFitter.fit(&data.train, None)?;
            let eval = evaluate_fit(
                &model,
                data.test_x.view(),
                data.test_mu.view(),
                0,
                &data.support,
                mean(data.train.y_slice()),
            )?;
            Ok((0, 0.0, eval))
        }
        Method::Lasso => fit_and_score(&LassoFitter::default(), data, nfolds, seed),
        Method::Rgam => fit_and_score(
            &RgamFitter {
                config: RgamConfig::default().with_seed(seed),
            },
            data,
            nfolds,
            seed,
        ),
        Method::RgamSel => fit_and_score(
            &RgamFitter {
                config: RgamConfig::sel().with_seed(seed),
            },
            data,
            nfolds,
            seed,
        ),
    }
}

/// Runs every (scenario, snr, replicate, method) combination. Fit failures
/// become rows with an error message and NaN metrics.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<Vec<SimResult>> {
    if cfg.replicates == 0 || cfg.methods.is_empty() || cfg.scenarios.is_empty() || cfg.snrs.is_empty() {
        return Err(RgamError::InvalidConfig(
            "benchmark needs at least one scenario, snr, method and replicate".into(),
        ));
    }
    let mut cells = Vec::new();
    for &scenario in &cfg.scenarios {
        for &snr in &cfg.snrs {
            for replicate in 0..cfg.replicates {
                cells.push((scenario, snr, replicate));
            }
        }
    }
    let rows: Vec<Result<Vec<SimResult>>> = cells
        .par_iter()
        .map(|&(scenario, snr, replicate)| {
            let seed = cell_seed(cfg.seed, scenario, snr, replicate);
            let (n0, p0) = scenario.dims();
            let spec = ScenarioSpec {
                scenario,
                n: cfg.n.unwrap_or(n0),
                p: cfg.p.unwrap_or(p0),
                snr,
                n_test: cfg.n_test,
                seed,
            };
            let data = generate_scenario(&spec)?;
            let out = cfg
                .methods
                .par_iter()
                .map(|&method| {
                    let base = SimResult {
                        scenario,
                        snr,
                        method,
                        replicate,
                        seed,
                        relative_test_error: f64::NAN,
                        test_mse: f64::NAN,
                        n_selected_features: 0,
                        n_selected_linear: 0,
                        n_selected_nonlinear: 0,
                        n_true_features_recovered: 0,
                        lambda_index: 0,
                        lambda: f64::NAN,
                        error: None,
                    };
                    match run_method(method, &data, cfg.nfolds, seed) {
                        Ok((lambda_index, lambda, e)) => SimResult {
                            relative_test_error: e.relative_test_error,
                            test_mse: e.test_mse,
                            n_selected_features: e.n_selected_features,
                            n_selected_linear: e.n_selected_linear,
                            n_selected_nonlinear: e.n_selected_nonlinear,
                            n_true_features_recovered: e.n_true_features_recovered,
                            lambda_index,
                            lambda,
                            ..base
                        },
                        Err(err) => SimResult {
                            error: Some(err.to_string()),
                            ..base
                        },
                    }
                })
                .collect();
            Ok(out)
        })
        .collect();
    Ok(rows.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

pub fn results_to_csv(rows: &[SimResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| RgamError::InvalidInput(format!("cannot finish CSV: {e}")))
}

pub fn write_results_csv(rows: &[SimResult], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &results_to_csv(rows)?)
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<SimResult>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<SimResult>, _>>()?;
    Ok(rows)
}

/// Type-7 sample quantile (linear interpolation between order statistics).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Per-(scenario, snr, method) medians and quartiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub snr: f64,
    pub method: Method,
    pub runs: usize,
    pub failed: usize,
    pub rel_error_q1: f64,
    pub rel_error_median: f64,
    pub rel_error_q3: f64,
    pub median_selected: f64,
    pub median_linear: f64,
    pub median_nonlinear: f64,
    pub median_recovered: f64,
}

/// Groups rows in order of first appearance and summarizes each group over
/// its successful runs.
pub fn summarize(rows: &[SimResult]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Scenario, u64, Method)> = Vec::new();
    for r in rows {
        let k = (r.scenario, r.snr.to_bits(), r.method);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(scenario, snr_bits, method)| {
            let group: Vec<&SimResult> = rows
                .iter()
                .filter(|r| r.scenario == scenario && r.snr.to_bits() == snr_bits && r.method == method)
                .collect();
            let ok: Vec<&SimResult> = group.iter().copied().filter(|r| r.error.is_none()).collect();
            let col = |f: fn(&SimResult) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let err = col(|r| r.relative_test_error);
            SummaryRow {
                scenario,
                snr: f64::from_bits(snr_bits),
                method,
                runs: group.len(),
                failed: group.len() - ok.len(),
                rel_error_q1: quantile(&err, 0.25),
                rel_error_median: quantile(&err, 0.5),
                rel_error_q3: quantile(&err, 0.75),
                median_selected: quantile(&col(|r| r.n_selected_features as f64), 0.5),
                median_linear: quantile(&col(|r| r.n_selected_linear as f64), 0.5),
                median_nonlinear: quantile(&col(|r| r.n_selected_nonlinear as f64), 0.5),
                median_recovered: quantile(&col(|r| r.n_true_features_recovered as f64), 0.5),
            }
        })
        .collect()
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| RgamError::InvalidInput(format!("cannot finish CSV: {e}")))
}
