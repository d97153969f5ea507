//! Compares cross-validated lasso and reluctant GAM curves on the same folds.

use rgam::cv::{cross_validate, LassoFitter, Metric};
use rgam::rgam::{RgamConfig, RgamFitter};
use rgam::sim::{generate_scenario, Scenario, ScenarioSpec};

fn main() -> rgam::Result<()> {
    let spec = ScenarioSpec {
        n: 150,
        p: 15,
        ..ScenarioSpec::new(Scenario::Nonlinear, 2.0, 8)
    };
    let data = generate_scenario(&spec)?.train;
    let lasso = cross_validate(&data, &LassoFitter::default(), 5, Metric::Mse, 8)?;
    let rgam = cross_validate(
        &data,
        &RgamFitter {
            config: RgamConfig::default().with_seed(8),
        },
        5,
        Metric::Mse,
        8,
    )?;
    assert_eq!(lasso.fold_assignments, rgam.fold_assignments);
    for (name, cv) in [("lasso", &lasso), ("rgam", &rgam)] {
        let k = cv.lambda_min_index;
        println!(
            "{name:>5}: lambda_min {:.4} (cv mse {:.3} +- {:.3}), lambda_1se {:.4}, counts at min {:?}",
            cv.lambda_min(),
            cv.mean_metric[k],
            cv.se_metric[k],
            cv.lambda_1se(),
            cv.nonzero_counts[k]
        );
    }
    Ok(())
}
