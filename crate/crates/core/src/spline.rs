//! Cubic smoothing splines targeted by effective degrees of freedom.
//!
//! The fit minimizes `sum_k w_k (rbar_k - f(u_k))^2 + lambda * int f''(t)^2 dt`
//! over natural cubic splines with knots at the unique x values `u_k`, where
//! `w_k` counts tied (or nearly tied) observations and `rbar_k` averages their responses.
//! Following Reinsch, the second derivatives `g` at the interior knots solve
//! the pentadiagonal system `(R + lambda Q' W^-1 Q) g = Q' rbar`, after which
//! `f = rbar - lambda W^-1 Q g`. Everything is O(m) in the number of knots.
//!
//! The effective degrees of freedom is the trace of the smoother matrix,
//! `2 + tr((R + lambda Q' W^-1 Q)^-1 R)`, computed exactly from the band of
//! the inverse (Hutchinson & de Hoog recursion).

use serde::{Deserialize, Serialize};

use crate::error::{Result, RgamError};

/// Initial bracket for the smoothing parameter search, relative to the natural
/// scale `tr(R) / tr(Q' W^-1 Q)` of the problem. Closely spaced knots can push
/// the answer far below it, so the bracket widens by `BRACKET_STEP` up to
/// `BRACKET_LIMIT`.
const LAMBDA_BRACKET: (f64, f64) = (1e-10, 1e10);
const BRACKET_STEP: f64 = 1e5;
const BRACKET_LIMIT: (f64, f64) = (1e-60, 1e60);
const MAX_SEARCH_STEPS: usize = 100;
/// The search stops once the trace is this close to the target.
const DF_SEARCH_TOL: f64 = 1e-8;
/// Values closer than this fraction of the x range share a knot. Nearly tied
/// knots make the banded system ill-conditioned and the trace noisy.
pub const TIE_TOLERANCE: f64 = 1e-5;
/// A search that ends further than this from its target is an error.
pub const DF_TOLERANCE: f64 = 1e-3;

/// A fitted natural cubic smoothing spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSplineFit {
    /// Sorted knots (group means of merged x values).
    pub knots: Vec<f64>,
    /// Spline values at the knots.
    pub values: Vec<f64>,
    /// Second derivatives at the knots (zero at both ends).
    pub second_derivatives: Vec<f64>,
    /// Roughness penalty weight; infinite for the least-squares line.
    #[serde(with = "extended_f64")]
    pub smoothing_parameter: f64,
    /// Trace of the smoother matrix.
    pub effective_df: f64,
    /// Fitted values at the training x, in input order.
    pub fitted: Vec<f64>,
}

impl SmoothingSplineFit {
    pub fn evaluate_at(&self, t: f64) -> f64 {
        let u = &self.knots;
        let f = &self.values;
        let g = &self.second_derivatives;
        let m = u.len();
        if t <= u[0] {
            let h = u[1] - u[0];
            let slope = (f[1] - f[0]) / h - h * (2.0 * g[0] + g[1]) / 6.0;
            return f[0] + (t - u[0]) * slope;
        }
        if t >= u[m - 1] {
            let h = u[m - 1] - u[m - 2];
            let slope = (f[m - 1] - f[m - 2]) / h + h * (g[m - 2] + 2.0 * g[m - 1]) / 6.0;
            return f[m - 1] + (t - u[m - 1]) * slope;
        }
        // u[k] <= t < u[k + 1]
        let k = u.partition_point(|&v| v <= t) - 1;
        let h = u[k + 1] - u[k];
        let a = t - u[k];
        let b = u[k + 1] - t;
        (a * f[k + 1] + b * f[k]) / h
            - a * b / 6.0 * ((1.0 + a / h) * g[k + 1] + (1.0 + b / h) * g[k])
    }

    pub fn evaluate(&self, x_new: &[f64]) -> Vec<f64> {
        x_new.iter().map(|&t| self.evaluate_at(t)).collect()
    }

    pub fn unique_count(&self) -> usize {
        self.knots.len()
    }
}

/// Evaluates a fitted spline; linear beyond the boundary knots.
pub fn evaluate_spline(fit: &SmoothingSplineFit, x_new: &[f64]) -> Vec<f64> {
    fit.evaluate(x_new)
}

/// Number of knots `x` produces: distinct values after merging near-ties.
pub fn unique_count(x: &[f64]) -> usize {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let (Some(&lo), Some(&hi)) = (v.first(), v.last()) else {
        return 0;
    };
    let tol = TIE_TOLERANCE * (hi - lo);
    let mut count = 0;
    let mut first = f64::NEG_INFINITY;
    for &t in &v {
        if count == 0 || t - first > tol {
            first = t;
            count += 1;
        }
    }
    count
}

/// Knot geometry shared by every smoothing parameter.
struct Knots {
    u: Vec<f64>,
    w: Vec<f64>,
    h: Vec<f64>,
    /// Knot index of each observation.
    group: Vec<usize>,
    /// Bands (offsets 0, 1) of the tridiagonal R.
    r0: Vec<f64>,
    r1: Vec<f64>,
    /// Bands (offsets 0, 1, 2) of Q' W^-1 Q.
    b0: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
}

impl Knots {
    fn new(x: &[f64]) -> Result<Self> {
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(RgamError::InvalidInput(format!("non-finite x value {bad}")));
        }
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let range = x[order[order.len() - 1]] - x[order[0]];
        let tol = TIE_TOLERANCE * range;
        let mut u: Vec<f64> = Vec::new();
        let mut w: Vec<f64> = Vec::new();
        let mut group = vec![0; x.len()];
        let mut first = f64::NEG_INFINITY;
        for &i in &order {
            if u.is_empty() || x[i] - first > tol {
                first = x[i];
                u.push(0.0);
                w.push(0.0);
            }
            let k = u.len() - 1;
            u[k] += x[i];
            w[k] += 1.0;
            group[i] = k;
        }
        for (uk, wk) in u.iter_mut().zip(&w) {
            *uk /= wk;
        }
        let m = u.len();
        if m < 4 {
            return Err(RgamError::TooFewUniqueValues(m));
        }
        let h: Vec<f64> = u.windows(2).map(|p| p[1] - p[0]).collect();
        let nint = m - 2;
        // Q is m x (m-2); column i (interior knot i+1) has entries at rows i, i+1, i+2.
        let q = |i: usize| -> [f64; 3] { [1.0 / h[i], -1.0 / h[i] - 1.0 / h[i + 1], 1.0 / h[i + 1]] };
        let mut r0 = vec![0.0; nint];
        let mut r1 = vec![0.0; nint];
        let mut b0 = vec![0.0; nint];
        let mut b1 = vec![0.0; nint];
        let mut b2 = vec![0.0; nint];
        for i in 0..nint {
            r0[i] = (h[i] + h[i + 1]) / 3.0;
            if i + 1 < nint {
                r1[i] = h[i + 1] / 6.0;
            }
            let qi = q(i);
            b0[i] = qi[0] * qi[0] / w[i] + qi[1] * qi[1] / w[i + 1] + qi[2] * qi[2] / w[i + 2];
            if i + 1 < nint {
                let qj = q(i + 1);
                // rows shared by columns i and i+1: i+1 and i+2
                b1[i] = qi[1] * qj[0] / w[i + 1] + qi[2] * qj[1] / w[i + 2];
            }
            if i + 2 < nint {
                let qk = q(i + 2);
                b2[i] = qi[2] * qk[0] / w[i + 2];
            }
        }
        Ok(Self {
            u,
            w,
            h,
            group,
            r0,
            r1,
            b0,
            b1,
            b2,
        })
    }

    fn m(&self) -> usize {
        self.u.len()
    }

    /// Natural scale of the smoothing parameter for this knot set.
    fn lambda_scale(&self) -> f64 {
        self.r0.iter().sum::<f64>() / self.b0.iter().sum::<f64>()
    }

    fn factor(&self, lambda: f64) -> BandLdl {
        BandLdl::new(
            self.r0.iter().zip(&self.b0).map(|(r, b)| r + lambda * b).collect(),
            self.r1.iter().zip(&self.b1).map(|(r, b)| r + lambda * b).collect(),
            self.b2.iter().map(|b| lambda * b).collect(),
        )
    }

    /// Trace of the smoother matrix at a finite smoothing parameter.
    fn trace(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return self.m() as f64;
        }
        let (s0, s1) = self.factor(lambda).inverse_band();
        let mut tr = 0.0;
        for i in 0..s0.len() {
            tr += s0[i] * self.r0[i];
            if i + 1 < s0.len() {
                tr += 2.0 * s1[i] * self.r1[i];
            }
        }
        2.0 + tr
    }

    /// Weighted averages of `r` at each knot.
    fn averages(&self, r: &[f64]) -> Vec<f64> {
        let mut sums = vec![0.0; self.m()];
        for (&k, &v) in self.group.iter().zip(r) {
            sums[k] += v;
        }
        sums.iter().zip(&self.w).map(|(s, w)| s / w).collect()
    }

    /// Values and second derivatives at the knots.
    fn solve(&self, rbar: &[f64], lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let m = self.m();
        let line = self.weighted_line(rbar);
        if lambda.is_infinite() {
            return (line, vec![0.0; m]);
        }
        // The smoother reproduces lines, so only the departure from the least
        // squares line is smoothed. Without this, rounding in the divided
        // differences of a linear response is amplified by large penalties.
        let dev: Vec<f64> = rbar.iter().zip(&line).map(|(r, l)| r - l).collect();
        // Q' dev
        let rhs: Vec<f64> = (0..m - 2)
            .map(|i| (dev[i + 2] - dev[i + 1]) / self.h[i + 1] - (dev[i + 1] - dev[i]) / self.h[i])
            .collect();
        let g_int = self.factor(lambda).solve(&rhs);
        let mut g = vec![0.0; m];
        g[1..m - 1].copy_from_slice(&g_int);
        // f = rbar - lambda W^-1 Q g
        let f = (0..m)
            .map(|k| {
                let mut qg = 0.0;
                if k >= 2 {
                    qg += g_int[k - 2] / self.h[k - 1];
                }
                if k >= 1 && k <= m - 2 {
                    qg += g_int[k - 1] * (-1.0 / self.h[k - 1] - 1.0 / self.h[k]);
                }
                if k + 2 < m {
                    qg += g_int[k] / self.h[k];
                }
                line[k] + dev[k] - lambda * qg / self.w[k]
            })
            .collect();
        (f, g)
    }

    fn weighted_line(&self, rbar: &[f64]) -> Vec<f64> {
        let wsum: f64 = self.w.iter().sum();
        let ubar = self.w.iter().zip(&self.u).map(|(w, u)| w * u).sum::<f64>() / wsum;
        let rmean = self.w.iter().zip(rbar).map(|(w, r)| w * r).sum::<f64>() / wsum;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for k in 0..self.m() {
            let du = self.u[k] - ubar;
            sxy += self.w[k] * du * (rbar[k] - rmean);
            sxx += self.w[k] * du * du;
        }
        let slope = sxy / sxx;
        self.u.iter().map(|u| rmean + slope * (u - ubar)).collect()
    }

    /// Smoothing parameter whose trace matches `target_df`.
    fn lambda_for_df(&self, target_df: f64) -> Result<f64> {
        let m = self.m() as f64;
        if !(target_df.is_finite() && target_df >= 2.0 - 1e-12 && target_df <= m + 1e-12) {
            return Err(RgamError::DfOutOfRange {
                target: target_df,
                max: m,
            });
        }
        if target_df >= m - 1e-12 {
            return Ok(0.0);
        }
        if target_df <= 2.0 + 1e-12 {
            return Ok(f64::INFINITY);
        }
        let scale = self.lambda_scale();
        let (mut lo, mut hi) = (LAMBDA_BRACKET.0.ln(), LAMBDA_BRACKET.1.ln());
        let df_at = |log_rho: f64| self.trace(scale * log_rho.exp());
        let step = BRACKET_STEP.ln();
        while df_at(lo) < target_df && lo > BRACKET_LIMIT.0.ln() {
            lo -= step;
        }
        while df_at(hi) > target_df && hi < BRACKET_LIMIT.1.ln() {
            hi += step;
        }
        if df_at(lo) < target_df || df_at(hi) > target_df {
            return Err(RgamError::DfSearch {
                lo: scale * lo.exp(),
                hi: scale * hi.exp(),
            });
        }
        let mut best = (f64::INFINITY, 0.0);
        for _ in 0..MAX_SEARCH_STEPS {
            let mid = 0.5 * (lo + hi);
            let df = df_at(mid);
            let err = (df - target_df).abs();
            if err < best.0 {
                best = (err, mid);
            }
            if err < DF_SEARCH_TOL {
                break;
            }
            // trace decreases in lambda
            if df > target_df {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if best.0 > DF_TOLERANCE {
            return Err(RgamError::DfSearch {
                lo: scale * lo.exp(),
                hi: scale * hi.exp(),
            });
        }
        Ok(scale * best.1.exp())
    }
}

/// LDL' factorization of a symmetric pentadiagonal matrix.
struct BandLdl {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl BandLdl {
    /// `a`, `b`, `c` are the diagonal and the first and second superdiagonals.
    fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Self {
        let n = a.len();
        let mut d = vec![0.0; n];
        let mut l1 = vec![0.0; n];
        let mut l2 = vec![0.0; n];
        for i in 0..n {
            let mut di = a[i];
            if i >= 1 {
                di -= l1[i - 1] * l1[i - 1] * d[i - 1];
            }
            if i >= 2 {
                di -= l2[i - 2] * l2[i - 2] * d[i - 2];
            }
            d[i] = di;
            if i + 1 < n {
                let mut v = b[i];
                if i >= 1 {
                    v -= l1[i - 1] * d[i - 1] * l2[i - 1];
                }
                l1[i] = v / di;
            }
            if i + 2 < n {
                l2[i] = c[i] / di;
            }
        }
        Self { d, l1, l2 }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut z = rhs.to_vec();
        for i in 0..n {
            if i >= 1 {
                z[i] -= self.l1[i - 1] * z[i - 1];
            }
            if i >= 2 {
                z[i] -= self.l2[i - 2] * z[i - 2];
            }
        }
        for i in 0..n {
            z[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                z[i] -= self.l1[i] * z[i + 1];
            }
            if i + 2 < n {
                z[i] -= self.l2[i] * z[i + 2];
            }
        }
        z
    }

    /// Diagonal and first superdiagonal of the inverse.
    fn inverse_band(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.d.len();
        let mut s0 = vec![0.0; n];
        let mut s1 = vec![0.0; n];
        let mut s2 = vec![0.0; n];
        for i in (0..n).rev() {
            let (l1, l2) = (self.l1[i], self.l2[i]);
            let at = |v: &Vec<f64>, k: usize| if k < n { v[k] } else { 0.0 };
            if i + 2 < n {
                s2[i] = -l1 * at(&s1, i + 1) - l2 * at(&s0, i + 2);
            }
            if i + 1 < n {
                s1[i] = -l1 * at(&s0, i + 1) - l2 * at(&s1, i + 1);
            }
            s0[i] = 1.0 / self.d[i] - l1 * s1[i] - l2 * s2[i];
        }
        (s0, s1)
    }
}

fn check_lengths(x: &[f64], r: &[f64]) -> Result<()> {
    if x.len() != r.len() {
        return Err(RgamError::InvalidInput(format!(
            "x has {} values but the response has {}",
            x.len(),
            r.len()
        )));
    }
    if x.len() < 4 {
        return Err(RgamError::TooFewUniqueValues(unique_count(x)));
    }
    Ok(())
}

/// Smoothing spline of `r` on `x` with a fixed smoothing parameter.
/// `lambda_s = 0` interpolates the knot averages; `f64::INFINITY` gives the
/// least-squares line.
pub fn fit_with_penalty(x: &[f64], r: &[f64], lambda_s: f64) -> Result<SmoothingSplineFit> {
    check_lengths(x, r)?;
    if lambda_s.is_nan() || lambda_s < 0.0 {
        return Err(RgamError::InvalidInput(format!(
            "smoothing parameter must be non-negative, got {lambda_s}"
        )));
    }
    let knots = Knots::new(x)?;
    Ok(assemble(&knots, r, lambda_s))
}

fn assemble(knots: &Knots, r: &[f64], lambda_s: f64) -> SmoothingSplineFit {
    let rbar = knots.averages(r);
    let (values, second_derivatives) = knots.solve(&rbar, lambda_s);
    let effective_df = if lambda_s.is_infinite() {
        2.0
    } else {
        knots.trace(lambda_s)
    };
    let fitted = knots.group.iter().map(|&k| values[k]).collect();
    SmoothingSplineFit {
        knots: knots.u.clone(),
        values,
        second_derivatives,
        smoothing_parameter: lambda_s,
        effective_df,
        fitted,
    }
}

/// Smoothing spline of `r` on `x` whose smoother matrix has trace `target_df`.
pub fn fit_smoothing_spline(x: &[f64], r: &[f64], target_df: f64) -> Result<SmoothingSplineFit> {
    check_lengths(x, r)?;
    let knots = Knots::new(x)?;
    let lambda = knots.lambda_for_df(target_df)?;
    Ok(assemble(&knots, r, lambda))
}

/// The smoothing parameter giving `target_df` effective degrees of freedom
/// for the design points `x`.
pub fn solve_df_to_lambda(x: &[f64], target_df: f64) -> Result<f64> {
    Knots::new(x)?.lambda_for_df(target_df)
}

/// Trace of the smoother matrix for design points `x`.
pub fn smoother_trace(x: &[f64], lambda_s: f64) -> Result<f64> {
    let knots = Knots::new(x)?;
    Ok(if lambda_s.is_infinite() {
        2.0
    } else {
        knots.trace(lambda_s)
    })
}

/// Serializes non-finite doubles as the strings "inf", "-inf" and "nan".
pub(crate) mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}
