//! K-fold cross-validation over a shared penalty path.
//!
//! The path comes from a fit on the full data. Each fold refits on its
//! complement with that path held fixed and is scored on the held-out rows at
//! every path point. Fold means are weighted by fold size, as in glmnet.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{format_f64, mean, write_atomic, Dataset};
use crate::error::{Result, RgamError};
use crate::family::{Family, Scale, PROB_CLAMP};
use crate::lasso::{self, FittedLinearModel, LambdaPath, SolverOptions, DEFAULT_NLAMBDA};

/// Features with a nonzero linear or non-linear coefficient (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Selection {
    pub linear: Vec<usize>,
    pub nonlinear: Vec<usize>,
}

impl Selection {
    /// Features with either kind of component.
    pub fn features(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.linear.iter().chain(&self.nonlinear).copied().collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// A model fitted along a penalty path.
pub trait PathModel {
    fn lambda(&self) -> &LambdaPath;
    fn predict(&self, x_new: ArrayView2<f64>, lambda_index: usize, scale: Scale) -> Result<Array1<f64>>;
    fn selection(&self, lambda_index: usize) -> Selection;

    /// Number of selected (linear, non-linear) components at a path point.
    fn nonzero_counts(&self, lambda_index: usize) -> (usize, usize) {
        let s = self.selection(lambda_index);
        (s.linear.len(), s.nonlinear.len())
    }
}

/// A procedure that fits a [`PathModel`], optionally on a fixed path.
pub trait PathFitter: Sync {
    type Model: PathModel + Send;
    fn fit(&self, d: &Dataset, path: Option<&LambdaPath>) -> Result<Self::Model>;
}

impl PathModel for FittedLinearModel {
    fn lambda(&self) -> &LambdaPath {
        &self.lambda
    }

    fn predict(&self, x_new: ArrayView2<f64>, lambda_index: usize, scale: Scale) -> Result<Array1<f64>> {
        FittedLinearModel::predict(self, x_new, lambda_index, scale)
    }

    fn selection(&self, lambda_index: usize) -> Selection {
        Selection {
            linear: self.nonzero(lambda_index),
            nonlinear: Vec::new(),
        }
    }
}

/// Intercept-only model; ignores the penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullModel {
    pub family: Family,
    pub mean: f64,
    pub p: usize,
    pub lambda: LambdaPath,
}

impl PathModel for NullModel {
    fn lambda(&self) -> &LambdaPath {
        &self.lambda
    }

    fn predict(&self, x_new: ArrayView2<f64>, _lambda_index: usize, scale: Scale) -> Result<Array1<f64>> {
        if x_new.ncols() != self.p {
            return Err(RgamError::DimensionMismatch {
                expected: self.p,
                found: x_new.ncols(),
            });
        }
        let v = match scale {
            Scale::Response => self.mean,
            Scale::Link => self.family.link(self.mean),
        };
        Ok(Array1::from_elem(x_new.nrows(), v))
    }

    fn selection(&self, _lambda_index: usize) -> Selection {
        Selection::default()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NullFitter;

impl PathFitter for NullFitter {
    type Model = NullModel;

    fn fit(&self, d: &Dataset, path: Option<&LambdaPath>) -> Result<NullModel> {
        let lambda = match path {
            Some(p) => p.clone(),
            None => LambdaPath::from_values(vec![0.0])?,
        };
        Ok(NullModel {
            family: d.family(),
            mean: mean(d.y_slice()),
            p: d.p(),
            lambda,
        })
    }
}

/// Plain lasso / L1-penalized GLM path.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFitter {
    pub opts: SolverOptions,
    pub nlambda: usize,
    pub min_ratio: Option<f64>,
}

impl Default for LassoFitter {
    fn default() -> Self {
        Self {
            opts: SolverOptions::default(),
            nlambda: DEFAULT_NLAMBDA,
            min_ratio: None,
        }
    }
}

impl PathFitter for LassoFitter {
    type Model = FittedLinearModel;

    fn fit(&self, d: &Dataset, path: Option<&LambdaPath>) -> Result<FittedLinearModel> {
        match path {
            Some(p) => lasso::fit_lasso_path(d, p, &self.opts),
            None => lasso::fit_lasso(d, &self.opts, self.nlambda, self.min_ratio),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Deviance,
    Mse,
    Auc,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Deviance => "deviance",
            Metric::Mse => "mse",
            Metric::Auc => "auc",
        }
    }

    pub fn higher_is_better(self) -> bool {
        self == Metric::Auc
    }

    fn score(self, family: Family, y: ArrayView1<f64>, mu: &Array1<f64>) -> Result<f64> {
        let y = y.as_slice().map(<[f64]>::to_vec).unwrap_or_else(|| y.to_vec());
        let mu = mu.to_vec();
        Ok(match self {
            Metric::Deviance => family.mean_deviance(&y, &mu),
            Metric::Mse => y.iter().zip(&mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64,
            Metric::Auc => auc(&mu, &y)?,
        })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = RgamError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "deviance" => Ok(Metric::Deviance),
            "mse" => Ok(Metric::Mse),
            "auc" => Ok(Metric::Auc),
            other => Err(RgamError::InvalidConfig(format!(
                "unknown metric `{other}` (expected deviance, mse or auc)"
            ))),
        }
    }
}

/// Area under the ROC curve: the probability that a random positive outscores
/// a random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(RgamError::InvalidInput(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1.0).count();
    let n_neg = labels.iter().filter(|&&l| l == 0.0).count();
    if n_pos + n_neg != labels.len() {
        return Err(RgamError::InvalidInput("auc labels must be 0 or 1".into()));
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(RgamError::InvalidInput("auc needs both classes".into()));
    }
    // Mann-Whitney with midranks
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1.0 {
                rank_sum += midrank;
            }
        }
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Mean binomial deviance with probabilities clamped to `[1e-10, 1 - 1e-10]`.
pub fn binomial_deviance(prob: &[f64], labels: &[f64]) -> f64 {
    let total: f64 = prob
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    -2.0 * total / prob.len() as f64
}

/// Seeded fold labels in `0..k`. Binomial responses are stratified by class.
/// Fold sizes differ by at most one.
pub fn assign_folds(d: &Dataset, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = d.n();
    if k < 2 || k > n {
        return Err(RgamError::InvalidConfig(format!(
            "number of folds must lie in [2, {n}], got {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = if d.family() == Family::Binomial {
        let y = d.y_slice();
        let mut zeros: Vec<usize> = (0..n).filter(|&i| y[i] == 0.0).collect();
        let mut ones: Vec<usize> = (0..n).filter(|&i| y[i] != 0.0).collect();
        zeros.shuffle(&mut rng);
        ones.shuffle(&mut rng);
        zeros.into_iter().chain(ones).collect()
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all
    };
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda: LambdaPath,
    pub metric: Metric,
    pub mean_metric: Vec<f64>,
    pub se_metric: Vec<f64>,
    pub lambda_min_index: usize,
    pub lambda_1se_index: usize,
    /// Fold label (0-based) of every observation.
    pub fold_assignments: Vec<usize>,
    /// `fold_metrics[f][k]`: metric of fold `f` at path point `k`.
    pub fold_metrics: Vec<Vec<f64>>,
    /// Selected (linear, non-linear) counts of the full-data model.
    pub nonzero_counts: Vec<(usize, usize)>,
    pub nfolds: usize,
    pub seed: u64,
}

impl CvResult {
    pub fn lambda_min(&self) -> f64 {
        self.lambda.values()[self.lambda_min_index]
    }

    pub fn lambda_1se(&self) -> f64 {
        self.lambda.values()[self.lambda_1se_index]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per path point:
    /// `lambda_index,lambda,mean,se,nonzero_linear,nonzero_nonlinear`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda_index,lambda,mean,se,nonzero_linear,nonzero_nonlinear\n");
        for k in 0..self.lambda.len() {
            let (lin, nl) = self.nonzero_counts[k];
            out.push_str(&format!(
                "{k},{},{},{},{lin},{nl}\n",
                format_f64(self.lambda.values()[k]),
                format_f64(self.mean_metric[k]),
                format_f64(self.se_metric[k]),
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Full-data model together with its cross-validation curve.
#[derive(Debug, Clone)]
pub struct CvFit<M> {
    pub model: M,
    pub cv: CvResult,
}

/// Cross-validates `fitter` and keeps the full-data model.
pub fn cv_fit<F: PathFitter>(d: &Dataset, fitter: &F, k: usize, metric: Metric, seed: u64) -> Result<CvFit<F::Model>> {
    if metric == Metric::Auc && d.family() != Family::Binomial {
        return Err(RgamError::InvalidConfig(format!(
            "auc needs a binomial response, got {}",
            d.family()
        )));
    }
    let folds = assign_folds(d, k, seed)?;
    let model = fitter.fit(d, None)?;
    let path = model.lambda().clone();
    let m = path.len();

    let per_fold: Vec<Result<(usize, Vec<f64>)>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..d.n()).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..d.n()).filter(|&i| folds[i] == f).collect();
            // the held-out part may be a single row, too small for a Dataset
            let test_x = d.x().select(Axis(0), &test);
            let test_y = d.y().select(Axis(0), &test);
            if d.family() == Family::Binomial {
                check_both_classes(&d.y().select(Axis(0), &train), f, "training")?;
                if metric == Metric::Auc {
                    check_both_classes(&test_y, f, "held-out")?;
                }
            }
            let train_d = d.select_rows(&train)?;
            let fold_model = fitter.fit(&train_d, Some(&path))?;
            let scores = (0..m)
                .map(|idx| {
                    let mu = fold_model.predict(test_x.view(), idx, Scale::Response)?;
                    metric.score(d.family(), test_y.view(), &mu)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((test.len(), scores))
        })
        .collect();
    let per_fold = per_fold.into_iter().collect::<Result<Vec<_>>>()?;

    let n = d.n() as f64;
    let mut mean_metric = vec![0.0; m];
    let mut se_metric = vec![0.0; m];
    for idx in 0..m {
        let mu = per_fold.iter().map(|(nf, s)| *nf as f64 * s[idx]).sum::<f64>() / n;
        let var = per_fold
            .iter()
            .map(|(nf, s)| *nf as f64 * (s[idx] - mu).powi(2))
            .sum::<f64>()
            / n
            / (k as f64 - 1.0);
        mean_metric[idx] = mu;
        se_metric[idx] = var.sqrt();
    }
    let (lambda_min_index, lambda_1se_index) = select_indices(&mean_metric, &se_metric, metric.higher_is_better());
    let nonzero_counts = (0..m).map(|idx| model.nonzero_counts(idx)).collect();
    Ok(CvFit {
        model,
        cv: CvResult {
            lambda: path,
            metric,
            mean_metric,
            se_metric,
            lambda_min_index,
            lambda_1se_index,
            fold_assignments: folds,
            fold_metrics: per_fold.into_iter().map(|(_, s)| s).collect(),
            nonzero_counts,
            nfolds: k,
            seed,
        },
    })
}

/// Cross-validation curve of `fitter` over its full-data path.
pub fn cross_validate<F: PathFitter>(d: &Dataset, fitter: &F, k: usize, metric: Metric, seed: u64) -> Result<CvResult> {
    cv_fit(d, fitter, k, metric, seed).map(|f| f.cv)
}

fn check_both_classes(y: &Array1<f64>, fold: usize, part: &'static str) -> Result<()> {
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == y.len() {
        Err(RgamError::SingleClass { fold, part })
    } else {
        Ok(())
    }
}

/// Index of the best mean, and the largest penalty within one se of it.
fn select_indices(mean: &[f64], se: &[f64], maximize: bool) -> (usize, usize) {
    let better = |a: f64, b: f64| if maximize { a > b } else { a < b };
    let mut best = 0;
    for k in 1..mean.len() {
        if better(mean[k], mean[best]) {
            best = k;
        }
    }
    let one_se = (0..=best)
        .find(|&k| {
            if maximize {
                mean[k] >= mean[best] - se[best]
            } else {
                mean[k] <= mean[best] + se[best]
            }
        })
        .unwrap_or(best);
    (best, one_se)
}
