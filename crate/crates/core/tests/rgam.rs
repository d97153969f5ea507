mod common;

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rgam::lasso::{default_lambda_path, fit_lasso_path, SolverOptions};
use rgam::rgam::*;
use rgam::{sample_sd, Dataset, Family, RgamError, Scale};

fn additive(n: usize, p: usize, seed: u64, family: Family) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
    let eta = Array1::from_shape_fn(n, |i| x[[i, 0]] + 2.0 * (x[[i, 1]] * x[[i, 1]] - 1.0 / 3.0) - 0.5 * x[[i, 2]]);
    let y = match family {
        Family::Gaussian => eta.mapv(|e| e + 0.4 * rng.sample::<f64, _>(StandardNormal)),
        Family::Binomial => eta.mapv(|e| f64::from(rng.random::<f64>() < 1.0 / (1.0 + (-2.0 * e).exp()))),
        Family::Poisson => eta.mapv(|e| {
            // inversion sampling keeps the test free of extra distributions
            let rate = (0.5 * e).exp();
            let (mut k, mut prob, u) = (0.0, (-rate).exp(), rng.random::<f64>());
            let mut cdf = prob;
            while u > cdf {
                k += 1.0;
                prob *= rate / k;
                cdf += prob;
            }
            k
        }),
    };
    Dataset::new(x, y, family).unwrap()
}

#[test]
fn zero_gamma_reduces_to_the_lasso() {
    let d = additive(80, 10, 1, Family::Gaussian);
    let path = default_lambda_path(&d, &SolverOptions::default(), 60, None).unwrap();
    let cfg = RgamConfig {
        step3_lambda: Some(path.clone()),
        ..RgamConfig::default().with_gamma(0.0).with_seed(2)
    };
    let model = fit_rgam(&d, &cfg).unwrap();
    let lasso = fit_lasso_path(&d, &path, &SolverOptions::default()).unwrap();
    for k in 0..path.len() {
        for (a, b) in model.linear_coefficients(k).iter().zip(lasso.coefficients(k)) {
            assert!((a - b).abs() < 1e-8, "lambda {k}: {a} vs {b}");
        }
        assert!((model.intercept(k) - lasso.intercept(k)).abs() < 1e-8);
        assert!(model.nonlinear_coefficients(k).iter().all(|&(_, c)| c == 0.0));
    }
}

#[test]
fn shifting_the_response_moves_only_the_intercept() {
    let d = additive(90, 8, 3, Family::Gaussian);
    let shifted = d.with_response(d.y().mapv(|v| v + 7.5)).unwrap();
    let cfg = RgamConfig::default().with_seed(4);
    let a = fit_rgam(&d, &cfg).unwrap();
    let b = fit_rgam(&shifted, &cfg).unwrap();
    assert_eq!(a.n_lambda(), b.n_lambda());
    for k in 0..a.n_lambda() {
        assert!((a.lambda().values()[k] - b.lambda().values()[k]).abs() < 1e-10);
        for (u, v) in a.linear_coefficients(k).iter().zip(b.linear_coefficients(k)) {
            assert!((u - v).abs() < 1e-8);
        }
        for ((_, u), (_, v)) in a.nonlinear_coefficients(k).iter().zip(b.nonlinear_coefficients(k)) {
            assert!((u - v).abs() < 1e-8);
        }
        assert!((b.intercept(k) - a.intercept(k) - 7.5).abs() < 1e-8);
    }
}

#[test]
fn glm_families_fit_and_predict_in_range() {
    let bin = additive(150, 6, 5, Family::Binomial);
    let model = fit_rgam(&bin, &RgamConfig::default().with_seed(1)).unwrap();
    let k = model.n_lambda() - 1;
    let prob = model.predict(bin.x(), k, Scale::Response).unwrap();
    assert!(prob.iter().all(|&v| v > 0.0 && v < 1.0));

    let pois = additive(150, 6, 6, Family::Poisson);
    let model = fit_rgam(&pois, &RgamConfig::default().with_seed(1)).unwrap();
    let mean = model.predict(pois.x(), model.n_lambda() / 2, Scale::Response).unwrap();
    assert!(mean.iter().all(|&v| v > 0.0));
    let link = model.predict(pois.x(), model.n_lambda() / 2, Scale::Link).unwrap();
    for (m, l) in mean.iter().zip(&link) {
        assert!((m - l.exp()).abs() < 1e-12 * m.max(1.0));
    }
}

#[test]
fn save_load_predicts_identically() {
    let d = additive(70, 7, 7, Family::Gaussian);
    let model = fit_rgam(&d, &RgamConfig::default().with_seed(9)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let loaded = RgamModel::load(&path).unwrap();
    assert_eq!(loaded, model);
    let fresh = additive(30, 7, 8, Family::Gaussian);
    for k in [0, model.n_lambda() / 3, model.n_lambda() - 1] {
        let a = model.predict(fresh.x(), k, Scale::Response).unwrap();
        let b = loaded.predict(fresh.x(), k, Scale::Response).unwrap();
        assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
    let again = fit_rgam(&d, &RgamConfig::default().with_seed(9)).unwrap();
    assert_eq!(again.to_json().unwrap(), model.to_json().unwrap());
}

#[test]
fn newer_model_versions_are_rejected() {
    let d = additive(40, 4, 2, Family::Gaussian);
    let model = fit_rgam(&d, &RgamConfig::default().with_seed(1)).unwrap();
    let text = model
        .to_json()
        .unwrap()
        .replacen(&format!("\"version\":{MODEL_VERSION}"), "\"version\":999", 1);
    match RgamModel::from_json(&text) {
        Err(RgamError::VersionMismatch { found, .. }) => assert_eq!(found, 999),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn invalid_configurations() {
    let d = additive(40, 4, 2, Family::Gaussian);
    let bad_df = RgamConfig {
        df: 1.0,
        ..RgamConfig::default()
    };
    assert!(matches!(fit_rgam(&d, &bad_df), Err(RgamError::InvalidConfig(_))));
    assert!(matches!(
        fit_rgam(&d, &RgamConfig::default().with_gamma(1.5)),
        Err(RgamError::InvalidConfig(_))
    ));
    let bad_nz = RgamConfig {
        init_nz: InitNonzero::Explicit(vec![9]),
        ..RgamConfig::default()
    };
    assert!(fit_rgam(&d, &bad_nz).is_err());
}

#[test]
fn restandardized_step3_ignores_gamma() {
    let d = additive(80, 6, 10, Family::Gaussian);
    let base = RgamConfig {
        step3_scaling: Step3Scaling::Restandardize,
        ..RgamConfig::default().with_seed(3)
    };
    let a = fit_rgam(&d, &base.clone().with_gamma(0.3)).unwrap();
    let b = fit_rgam(&d, &base.with_gamma(0.9)).unwrap();
    let pa = a.predict(d.x(), a.n_lambda() / 2, Scale::Response).unwrap();
    let pb = b.predict(d.x(), b.n_lambda() / 2, Scale::Response).unwrap();
    for (u, v) in pa.iter().zip(&pb) {
        assert!((u - v).abs() < 1e-6);
    }
}

fn rescaling_error(model: &RgamModel, d: &Dataset) -> f64 {
    let f = model.nonlinear_columns(d.x()).unwrap();
    let sd_mean = d.x().columns().into_iter().map(|c| sample_sd(&c.to_vec())).sum::<f64>() / d.p() as f64;
    f.columns()
        .into_iter()
        .map(|c| (sample_sd(&c.to_vec()) / sd_mean - model.gamma).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn active_columns_have_relative_sd_gamma(seed in 0u64..10_000, gamma in 0.05f64..1.0, sel in any::<bool>()) {
        let d = additive(60, 5, seed, Family::Gaussian);
        let cfg = if sel { RgamConfig::sel() } else { RgamConfig::default() };
        let model = fit_rgam(&d, &cfg.with_gamma(gamma).with_seed(seed)).unwrap();
        prop_assert!(rescaling_error(&model, &d) < 1e-8);
        if sel {
            for f in model.active_splines() {
                prop_assert!(model.active_set.contains(&f.feature_index));
            }
        }
    }
}
