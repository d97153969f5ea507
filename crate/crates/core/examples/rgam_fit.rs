//! Fits a reluctant GAM on simulated data with one linear and one quadratic
//! signal, then reports which terms enter along the path.

use rgam::rgam::{fit_rgam, RgamConfig};
use rgam::sim::{generate_scenario, Scenario, ScenarioSpec};
use rgam::Scale;

fn main() -> rgam::Result<()> {
    let spec = ScenarioSpec {
        n: 200,
        p: 20,
        n_test: 1000,
        ..ScenarioSpec::new(Scenario::Mixed, 2.0, 3)
    };
    let data = generate_scenario(&spec)?;
    let model = fit_rgam(&data.train, &RgamConfig::default().with_seed(3))?;
    println!("gamma {}, {} spline columns", model.gamma, model.active_splines().count());

    let null = data.test_mu.mapv(|m| (m - data.train.y().mean().unwrap()).powi(2)).mean().unwrap();
    for k in (0..model.n_lambda()).step_by(10) {
        let pred = model.predict(data.test_x.view(), k, Scale::Response)?;
        let err = (&pred - &data.test_mu).mapv(|e| e * e).mean().unwrap() / null;
        println!(
            "lambda {:>8.4}: {:>2} linear, {:>2} nonlinear, relative error {err:.3}",
            model.lambda().values()[k],
            model.selected_linear(k).len(),
            model.selected_nonlinear(k).len()
        );
    }
    println!("true support {:?}", data.support);
    Ok(())
}
