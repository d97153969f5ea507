//! Coordinate descent for the (weighted) lasso on a centered, scaled design.
//!
//! Minimizes `1/(2n) sum_i w_i (z_i - b0 - x_i' beta)^2 + lambda sum_j |beta_j|`
//! over the penalized coordinates, cycling over the active set between full
//! sweeps. When the active-set sweeps converge slowly (nearly saturated fits),
//! the stationarity equations for the current active set and signs are solved
//! directly and the result checked by further sweeps.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;

use crate::data::{mean, sample_sd, ZERO_VARIANCE_TOL};
use crate::error::{Result, RgamError};

use super::ColumnScaling;

/// Centered and scaled copy of the feature matrix, stored column-major.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub n: usize,
    pub cols: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub excluded: Vec<bool>,
}

impl Design {
    pub fn new(x: ArrayView2<f64>, scaling: &ColumnScaling) -> Result<Self> {
        let (n, p) = x.dim();
        if let ColumnScaling::Divisors(d) = scaling {
            if d.len() != p {
                return Err(RgamError::DimensionMismatch {
                    expected: p,
                    found: d.len(),
                });
            }
        }
        let mut cols = Vec::with_capacity(p);
        let mut means = Vec::with_capacity(p);
        let mut scales = Vec::with_capacity(p);
        let mut excluded = Vec::with_capacity(p);
        for (j, col) in x.columns().into_iter().enumerate() {
            let v = col.to_vec();
            let m = mean(&v);
            let sd = sample_sd(&v);
            let constant = sd <= ZERO_VARIANCE_TOL * (1.0 + m.abs());
            let scale = match scaling {
                ColumnScaling::Standardize => sd,
                ColumnScaling::Divisors(d) => d[j],
            };
            let dead = constant || !(scale.is_finite() && scale > 0.0);
            let c = if dead {
                vec![0.0; n]
            } else {
                v.iter().map(|&a| (a - m) / scale).collect()
            };
            cols.push(c);
            means.push(m);
            scales.push(if dead { 1.0 } else { scale });
            excluded.push(dead);
        }
        if excluded.iter().all(|&e| e) {
            return Err(RgamError::AllZeroVariance);
        }
        Ok(Self {
            n,
            cols,
            means,
            scales,
            excluded,
        })
    }

    pub fn p(&self) -> usize {
        self.cols.len()
    }

    /// `b0 + X beta` on the scaled design.
    pub fn linear_predictor(&self, beta: &[f64], b0: f64) -> Vec<f64> {
        let mut eta = vec![b0; self.n];
        for (col, &b) in self.cols.iter().zip(beta) {
            if b != 0.0 {
                for (e, &x) in eta.iter_mut().zip(col) {
                    *e += b * x;
                }
            }
        }
        eta
    }

    /// `x_j' v / n` for every non-excluded column.
    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n as f64;
        self.cols
            .iter()
            .zip(&self.excluded)
            .map(|(c, &ex)| if ex { 0.0 } else { dot(c, v) / n })
            .collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn soft_threshold(u: f64, t: f64) -> f64 {
    if u > t {
        u - t
    } else if u < -t {
        u + t
    } else {
        0.0
    }
}

/// Active-set sweeps between attempts at an exact active-set solve.
const POLISH_EVERY: usize = 25;
/// Coordinates one polish may remove from the active set.
const MAX_POLISH_DROPS: usize = 20;

pub(crate) struct Problem<'a> {
    pub design: &'a Design,
    pub penalized: &'a [bool],
    /// Observation weights; `None` means unit weights.
    pub weights: Option<&'a [f64]>,
}

impl Problem<'_> {
    /// Runs coordinate descent from the warm start in `beta` (and `intercept`,
    /// when an intercept is fitted). Returns the number of sweeps, or
    /// `Err(sweeps)` on hitting the cap.
    pub fn solve(
        &self,
        z: &[f64],
        beta: &mut [f64],
        mut intercept: Option<&mut f64>,
        lambda: f64,
        tol: f64,
        max_sweeps: usize,
    ) -> std::result::Result<usize, usize> {
        let d = self.design;
        let n = d.n as f64;
        let b0 = intercept.as_deref().copied().unwrap_or(0.0);
        let eta = d.linear_predictor(beta, b0);
        let mut r: Vec<f64> = z.iter().zip(&eta).map(|(a, b)| a - b).collect();

        let curvature: Vec<f64> = d
            .cols
            .iter()
            .zip(&d.excluded)
            .map(|(c, &ex)| {
                if ex {
                    0.0
                } else {
                    match self.weights {
                        None => dot(c, c) / n,
                        Some(w) => c.iter().zip(w).map(|(x, wi)| wi * x * x).sum::<f64>() / n,
                    }
                }
            })
            .collect();
        let weight_sum = self.weights.map_or(n, |w| w.iter().sum());

        let mut sweeps = 0usize;
        let all: Vec<usize> = (0..d.p()).filter(|&j| !d.excluded[j] && curvature[j] > 0.0).collect();
        loop {
            let delta = self.sweep(&all, &curvature, &mut r, beta, intercept.as_deref_mut(), weight_sum, lambda);
            sweeps += 1;
            if delta < tol {
                break;
            }
            if sweeps >= max_sweeps {
                return Err(sweeps);
            }
            let mut inner = 0usize;
            loop {
                let active: Vec<usize> = all
                    .iter()
                    .copied()
                    .filter(|&j| beta[j] != 0.0 || !self.penalized[j])
                    .collect();
                let delta =
                    self.sweep(&active, &curvature, &mut r, beta, intercept.as_deref_mut(), weight_sum, lambda);
                sweeps += 1;
                inner += 1;
                if delta < tol {
                    break;
                }
                if sweeps >= max_sweeps {
                    return Err(sweeps);
                }
                if inner % POLISH_EVERY == 0 {
                    self.polish(&active, z, beta, intercept.as_deref_mut(), &mut r, lambda);
                }
            }
        }
        Ok(sweeps)
    }

    /// Moves toward the exact solution of the stationarity equations on the
    /// active set with the current signs held fixed. When a coefficient would
    /// change sign, the step stops where it reaches zero, that coordinate
    /// leaves the set and the solve is repeated. Every step lowers the
    /// objective; the caller's sweeps then check optimality.
    fn polish(
        &self,
        active: &[usize],
        z: &[f64],
        beta: &mut [f64],
        mut intercept: Option<&mut f64>,
        r: &mut [f64],
        lambda: f64,
    ) {
        let d = self.design;
        let mut set = active.to_vec();
        let mut b0 = intercept.as_deref().copied();
        let mut moved = false;
        for _ in 0..MAX_POLISH_DROPS {
            let Some(sol) = self.active_solution(&set, b0.is_some(), z, beta, lambda) else {
                break;
            };
            // largest step along the segment that keeps every sign
            let mut step = 1.0;
            let mut hit = None;
            for (a, &j) in set.iter().enumerate() {
                if self.penalized[j] && sol[a] * beta[j].signum() <= 0.0 {
                    let t = beta[j] / (beta[j] - sol[a]);
                    if t < step {
                        step = t;
                        hit = Some(a);
                    }
                }
            }
            for (a, &j) in set.iter().enumerate() {
                beta[j] += step * (sol[a] - beta[j]);
            }
            if let Some(b) = b0.as_mut() {
                *b += step * (sol[set.len()] - *b);
            }
            moved = true;
            match hit {
                None => break,
                Some(a) => {
                    beta[set[a]] = 0.0;
                    set.remove(a);
                }
            }
        }
        if !moved {
            return;
        }
        if let (Some(target), Some(b)) = (intercept.as_deref_mut(), b0) {
            *target = b;
        }
        let eta = d.linear_predictor(beta, b0.unwrap_or(0.0));
        for ((ri, zi), e) in r.iter_mut().zip(z).zip(eta) {
            *ri = zi - e;
        }
    }

    /// Minimizer of the smooth part plus `lambda * sign(beta)' beta` over the
    /// coordinates in `set` (and the intercept, last), or `None` when that
    /// system is singular.
    fn active_solution(
        &self,
        set: &[usize],
        has_b0: bool,
        z: &[f64],
        beta: &[f64],
        lambda: f64,
    ) -> Option<DVector<f64>> {
        let d = self.design;
        let n = d.n;
        let m = set.len() + usize::from(has_b0);
        if m == 0 || m > n {
            return None;
        }
        let unit = vec![1.0; n];
        let cols: Vec<&[f64]> = set
            .iter()
            .map(|&j| d.cols[j].as_slice())
            .chain(has_b0.then_some(unit.as_slice()))
            .collect();
        let weighted: Vec<Vec<f64>> = cols
            .iter()
            .map(|c| match self.weights {
                None => c.to_vec(),
                Some(w) => c.iter().zip(w).map(|(x, wi)| x * wi).collect(),
            })
            .collect();
        let nf = n as f64;
        let mut g = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        for a in 0..m {
            for b in 0..=a {
                let v = dot(&weighted[a], cols[b]) / nf;
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
            rhs[a] = dot(&weighted[a], z) / nf;
            if a < set.len() && self.penalized[set[a]] {
                rhs[a] -= lambda * beta[set[a]].signum();
            }
        }
        let sol = g.cholesky()?.solve(&rhs);
        sol.iter().all(|v| v.is_finite()).then_some(sol)
    }

    #[allow(clippy::too_many_arguments)]
    fn sweep(
        &self,
        coords: &[usize],
        curvature: &[f64],
        r: &mut [f64],
        beta: &mut [f64],
        intercept: Option<&mut f64>,
        weight_sum: f64,
        lambda: f64,
    ) -> f64 {
        let d = self.design;
        let n = d.n as f64;
        let mut max_delta = 0.0f64;
        for &j in coords {
            let col = &d.cols[j];
            let g = match self.weights {
                None => dot(col, r) / n,
                Some(w) => col.iter().zip(w).zip(r.iter()).map(|((x, wi), ri)| x * wi * ri).sum::<f64>() / n,
            };
            let old = beta[j];
            let u = g + curvature[j] * old;
            let new = if self.penalized[j] {
                soft_threshold(u, lambda) / curvature[j]
            } else {
                u / curvature[j]
            };
            if new != old {
                let diff = new - old;
                for (ri, &x) in r.iter_mut().zip(col) {
                    *ri -= diff * x;
                }
                beta[j] = new;
                max_delta = max_delta.max(diff.abs());
            }
        }
        if let Some(b0) = intercept {
            let shift = match self.weights {
                None => r.iter().sum::<f64>() / weight_sum,
                Some(w) => dot(w, r) / weight_sum,
            };
            if shift != 0.0 {
                *b0 += shift;
                r.iter_mut().for_each(|ri| *ri -= shift);
                max_delta = max_delta.max(shift.abs());
            }
        }
        max_delta
    }
}
