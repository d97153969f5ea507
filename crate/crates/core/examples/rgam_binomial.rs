//! Logistic reluctant GAM on a curved decision boundary, tuned by AUC.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgam::cv::{cv_fit, Metric};
use rgam::rgam::{RgamConfig, RgamFitter};
use rgam::{Dataset, Family, Scale};

fn main() -> rgam::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, p) = (300, 8);
    let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
    let y = Array1::from_shape_fn(n, |i| {
        let eta: f64 = 2.0 * x[[i, 0]] + 4.0 * (x[[i, 1]] * x[[i, 1]] - 1.0 / 3.0);
        f64::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))
    });
    let data = Dataset::new(x, y, Family::Binomial)?;

    let fitter = RgamFitter {
        config: RgamConfig::default().with_seed(11),
    };
    let fit = cv_fit(&data, &fitter, 5, Metric::Auc, 11)?;
    let k = fit.cv.lambda_1se_index;
    println!("cv auc at lambda_1se: {:.3}", fit.cv.mean_metric[k]);
    println!("linear {:?}, nonlinear {:?}", fit.model.selected_linear(k), fit.model.selected_nonlinear(k));
    let prob = fit.model.predict(data.x(), k, Scale::Response)?;
    let accuracy = prob.iter().zip(data.y()).filter(|(p, y)| (**p > 0.5) == (**y == 1.0)).count() as f64 / n as f64;
    println!("training accuracy {accuracy:.3}");
    Ok(())
}
