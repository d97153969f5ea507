//! Monte Carlo degrees of freedom for OLS, a fixed smoother and an
//! unpenalized reluctant GAM refit.

use ndarray::Array2;
use rgam::dof::{estimate_df, DofConfig, LinearSmoother, OlsFitter, UnpenalizedRgam};
use rgam::sim::{generate_scenario, Scenario, ScenarioSpec};
use rgam::spline::{fit_with_penalty, solve_df_to_lambda};

fn main() -> rgam::Result<()> {
    let spec = ScenarioSpec {
        n: 100,
        p: 10,
        ..ScenarioSpec::new(Scenario::Mixed, 2.0, 4)
    };
    let data = generate_scenario(&spec)?;
    let x = data.train.x();
    let cfg = DofConfig::new(data.train_mu.to_vec(), data.sigma, 100, 4);

    let ols = estimate_df(&OlsFitter, x, &cfg)?;
    println!("ols: {:.2} +- {:.2} (exact {})", ols.df_hat, ols.standard_error, x.ncols() + 1);

    // smoother matrix of a 5 df spline in the first feature
    let x0 = x.column(0).to_vec();
    let lambda = solve_df_to_lambda(&x0, 5.0)?;
    let n = x0.len();
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let fit = fit_with_penalty(&x0, &e, lambda)?;
        s.column_mut(i).assign(&ndarray::Array1::from(fit.fitted));
    }
    let smoother = LinearSmoother { matrix: s };
    let est = estimate_df(&smoother, x, &cfg)?;
    println!("spline: {:.2} +- {:.2} (trace {:.2})", est.df_hat, est.standard_error, smoother.trace());

    let rgam = estimate_df(&UnpenalizedRgam::rgam(4), x, &cfg)?;
    println!("unpenalized rgam: {:.2} +- {:.2}", rgam.df_hat, rgam.standard_error);
    Ok(())
}
