//! Independent reference computations shared by the integration suites.
#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rgam::lasso::FittedLinearModel;
use rgam::{Dataset, Family, Scale};

pub fn gaussian_instance(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let k = p.min(5);
    let y = Array1::from_shape_fn(n, |i| {
        (0..k).map(|j| x[[i, j]] * (j as f64 + 1.0) * 0.5).sum::<f64>()
            + rng.sample::<f64, _>(StandardNormal)
    });
    Dataset::new(x, y, Family::Gaussian).unwrap()
}

/// Centers and scales `x` with the model's recorded column statistics.
pub fn scaled_design(model: &FittedLinearModel, x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        if model.excluded[j] {
            col.fill(0.0);
        } else {
            let (m, s) = (model.column_means[j], model.column_scales[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
    }
    out
}

/// Largest violation of the lasso stationarity conditions at one penalty value,
/// measured on the scaled design: active coordinates need gradient equal to
/// `lambda * sign(beta)`, inactive ones need `|gradient| <= lambda`.
pub fn kkt_violation(model: &FittedLinearModel, d: &Dataset, k: usize) -> f64 {
    let lambda = model.lambda.values()[k];
    let xs = scaled_design(model, d.x());
    let mu = model.predict(d.x(), k, Scale::Response).unwrap();
    let resid = &d.y() - &mu;
    let n = d.n() as f64;
    let beta = model.scaled_coefficients(k);
    let mut worst = 0.0f64;
    for j in 0..model.n_features() {
        if model.excluded[j] {
            continue;
        }
        let g = xs.column(j).dot(&resid) / n;
        let v = if !model.penalized[j] {
            g.abs()
        } else if beta[j] != 0.0 {
            (g - lambda * beta[j].signum()).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Lasso objective `1/(2n) ||y - ybar - Xs b||^2 + lambda ||b||_1` on the
/// scaled design.
pub fn lasso_objective(xs: &Array2<f64>, yc: &Array1<f64>, b: &Array1<f64>, lambda: f64) -> f64 {
    let n = yc.len() as f64;
    let r = yc - &xs.dot(b);
    r.dot(&r) / (2.0 * n) + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
}

/// Accelerated proximal gradient (FISTA) for the gaussian lasso, run to a
/// tight tolerance. Entirely separate from the coordinate descent code path.
pub fn fista_lasso(xs: &Array2<f64>, yc: &Array1<f64>, lambda: f64, iters: usize) -> Array1<f64> {
    let n = yc.len() as f64;
    let gram = xs.t().dot(xs) / n;
    let xty = xs.t().dot(yc) / n;
    // step from the largest eigenvalue by power iteration
    let mut v = Array1::from_elem(gram.ncols(), 1.0);
    let mut l = 1.0;
    for _ in 0..500 {
        let w = gram.dot(&v);
        l = w.dot(&w).sqrt();
        v = w / l;
    }
    let step = 1.0 / (l * 1.01);
    let p = gram.ncols();
    let mut b = Array1::<f64>::zeros(p);
    let mut z = b.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad = gram.dot(&z) - &xty;
        let u = &z - &(grad * step);
        let next = u.mapv(|a| soft(a, lambda * step));
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = &next + &((&next - &b) * ((t - 1.0) / t_next));
        b = next;
        t = t_next;
    }
    b
}

fn soft(u: f64, t: f64) -> f64 {
    u.signum() * (u.abs() - t).max(0.0)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Array1<f64> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[[i, k]].abs().total_cmp(&a[[j, k]].abs()))
            .unwrap();
        for c in 0..n {
            a.swap([k, c], [piv, c]);
        }
        b.swap(k, piv);
        for i in k + 1..n {
            let f = a[[i, k]] / a[[k, k]];
            for c in k..n {
                a[[i, c]] -= f * a[[k, c]];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = Array1::zeros(n);
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|c| a[[i, c]] * x[c]).sum();
        x[i] = (b[i] - s) / a[[i, i]];
    }
    x
}

/// Dense inverse by Gauss-Jordan elimination.
pub fn dense_inverse(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut out = Array2::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::zeros(n);
        e[j] = 1.0;
        out.column_mut(j).assign(&dense_solve(a.clone(), e));
    }
    out
}

/// Ordinary least squares fitted values with an intercept.
pub fn ols_fitted(x: ArrayView2<f64>, y: &Array1<f64>) -> Array1<f64> {
    let n = x.nrows();
    let mut design = Array2::ones((n, x.ncols() + 1));
    design.slice_mut(ndarray::s![.., 1..]).assign(&x);
    let coef = dense_solve(design.t().dot(&design), design.t().dot(y));
    design.dot(&coef)
}

/// Roughness matrix `Omega[j][k] = int N_j'' N_k''` of the natural cubic
/// interpolation basis on sorted distinct knots `u`. Each basis function's
/// second derivatives come from the interpolation conditions, and the
/// integrals of the piecewise-linear products are taken interval by interval.
pub fn natural_spline_roughness(u: &[f64]) -> Array2<f64> {
    let m = u.len();
    let h: Vec<f64> = u.windows(2).map(|w| w[1] - w[0]).collect();
    // second derivatives at all knots for each unit data vector
    let mut g = Array2::<f64>::zeros((m, m));
    for k in 0..m {
        let mut a = Array2::<f64>::zeros((m, m));
        let mut b = Array1::<f64>::zeros(m);
        a[[0, 0]] = 1.0;
        a[[m - 1, m - 1]] = 1.0;
        let e = |i: usize| if i == k { 1.0 } else { 0.0 };
        for i in 1..m - 1 {
            a[[i, i - 1]] = h[i - 1] / 6.0;
            a[[i, i]] = (h[i - 1] + h[i]) / 3.0;
            a[[i, i + 1]] = h[i] / 6.0;
            b[i] = (e(i + 1) - e(i)) / h[i] - (e(i) - e(i - 1)) / h[i - 1];
        }
        g.column_mut(k).assign(&dense_solve(a, b));
    }
    let mut omega = Array2::zeros((m, m));
    for j in 0..m {
        for k in 0..m {
            let mut s = 0.0;
            for i in 0..m - 1 {
                let (a0, a1) = (g[[i, j]], g[[i + 1, j]]);
                let (b0, b1) = (g[[i, k]], g[[i + 1, k]]);
                s += h[i] / 6.0 * (2.0 * a0 * b0 + a0 * b1 + a1 * b0 + 2.0 * a1 * b1);
            }
            omega[[j, k]] = s;
        }
    }
    omega
}

/// Dense smoother matrix `(I + lambda Omega)^-1` for distinct sorted knots.
pub fn dense_smoother(u: &[f64], lambda: f64) -> Array2<f64> {
    let omega = natural_spline_roughness(u);
    let a = Array2::<f64>::eye(u.len()) + omega * lambda;
    dense_inverse(&a)
}
