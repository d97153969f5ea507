//! Smooths a noisy sine curve at a few degrees of freedom.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgam::spline::{fit_smoothing_spline, smoother_trace};

fn main() -> rgam::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut x: Vec<f64> = (0..200).map(|_| rng.random_range(-3.0..3.0)).collect();
    x.sort_by(f64::total_cmp);
    let truth: Vec<f64> = x.iter().map(|v| v.sin()).collect();
    let y: Vec<f64> = truth.iter().map(|t| t + rng.random_range(-0.5..0.5)).collect();

    for df in [2.0, 4.0, 8.0, 20.0] {
        let fit = fit_smoothing_spline(&x, &y, df)?;
        let mse = fit.fitted.iter().zip(&truth).map(|(f, t)| (f - t).powi(2)).sum::<f64>() / x.len() as f64;
        let trace = smoother_trace(&x, fit.smoothing_parameter)?;
        println!(
            "df {df:>4}: lambda {:.3e}, trace {trace:.6}, mse vs truth {mse:.4}",
            fit.smoothing_parameter
        );
    }
    let fit = fit_smoothing_spline(&x, &y, 6.0)?;
    let grid = [-3.0, -1.5, 0.0, 1.5, 3.0, 4.0];
    for (g, v) in grid.iter().zip(fit.evaluate(&grid)) {
        println!("f({g:>4}) = {v:>7.4}   sin = {:>7.4}", g.sin());
    }
    Ok(())
}
