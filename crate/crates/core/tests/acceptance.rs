//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; the process fails if any does.

mod common;

use std::time::{Duration, Instant};

use common::{dense_smoother, fista_lasso, gaussian_instance, kkt_violation, lasso_objective, scaled_design};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgam::dof::{estimate_df, DofConfig, GrandMeanFitter, IdentityFitter, OlsFitter, UnpenalizedRgam};
use rgam::lasso::{default_lambda_path, fit_lasso, fit_lasso_path, SolverOptions, DEFAULT_NLAMBDA};
use rgam::rgam::{fit_rgam, RgamConfig, RgamModel};
use rgam::sim::*;
use rgam::spline::{fit_smoothing_spline, fit_with_penalty, solve_df_to_lambda};
use rgam::{sample_sd, Dataset, Family, Scale};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run(id: u32, name: &str, budget: Option<Duration>, check: fn() -> Outcome) -> bool {
    let start = Instant::now();
    let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let in_time = budget.is_none_or(|b| elapsed <= b);
    let pass = result.pass && in_time;
    let budget_note = budget.map_or(String::new(), |b| format!(" (budget {:.0} s)", b.as_secs_f64()));
    println!(
        "criterion {id} [{name}]: {} | {} | {:.1} s{budget_note}",
        if pass { "PASS" } else { "FAIL" },
        result.detail,
        elapsed.as_secs_f64(),
    );
    pass
}

fn main() {
    let results = [
        run(1, "lasso solver", Some(Duration::from_secs(30)), solver_correctness),
        run(2, "smoothing spline", Some(Duration::from_secs(10)), spline_correctness),
        run(3, "rescaling identity", None, rescaling_identity),
        run(4, "nonlinear scenario", Some(Duration::from_secs(300)), nonlinear_scenario),
        run(5, "hier scenario", Some(Duration::from_secs(300)), hier_scenario),
        run(6, "degrees of freedom", Some(Duration::from_secs(600)), degrees_of_freedom),
        run(7, "generator fidelity", None, generator_fidelity),
        run(8, "determinism and serialization", None, determinism),
    ];
    let failed = results.iter().filter(|&&p| !p).count();
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn solver_correctness() -> Outcome {
    let mut worst_kkt = 0.0f64;
    for seed in 0..50 {
        let d = gaussian_instance(50, 100, 1000 + seed);
        let fit = fit_lasso(&d, &SolverOptions::default(), DEFAULT_NLAMBDA, None).unwrap();
        assert_eq!(fit.n_lambda(), DEFAULT_NLAMBDA);
        for k in 0..fit.n_lambda() {
            worst_kkt = worst_kkt.max(kkt_violation(&fit, &d, k));
        }
    }
    let mut worst_rel = 0.0f64;
    for (seed, (n, p)) in [(20, 15), (15, 20), (20, 20), (12, 8), (18, 5)].into_iter().enumerate() {
        let d = gaussian_instance(n, p, 2000 + seed as u64);
        let fit = fit_lasso(&d, &SolverOptions::default(), 20, Some(1e-3)).unwrap();
        let xs = scaled_design(&fit, d.x());
        let ybar = d.y().mean().unwrap();
        let yc = d.y().mapv(|v| v - ybar);
        for k in [1, 4, 8, 12, 19] {
            let lambda = fit.lambda.values()[k];
            let cd = Array1::from(fit.scaled_coefficients(k));
            let reference = fista_lasso(&xs, &yc, lambda, 20_000);
            let f_cd = lasso_objective(&xs, &yc, &cd, lambda);
            let f_ref = lasso_objective(&xs, &yc, &reference, lambda);
            worst_rel = worst_rel.max((f_cd - f_ref).abs() / f_ref.abs());
        }
    }
    outcome(
        worst_kkt < 1e-6 && worst_rel < 1e-6,
        format!("max KKT violation {worst_kkt:.2e} over 50 paths, max objective gap {worst_rel:.2e}"),
    )
}

fn sorted_uniform(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    x.sort_by(f64::total_cmp);
    x
}

fn spline_correctness() -> Outcome {
    let mut worst_trace = 0.0f64;
    for (n, seed) in [(20, 1), (100, 2)] {
        let x = sorted_uniform(n, seed);
        for df in [3.0, 4.0, 6.0] {
            let lambda = solve_df_to_lambda(&x, df).unwrap();
            // smoother assembled column by column from unit responses
            let mut s = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                let fit = fit_with_penalty(&x, &e, lambda).unwrap();
                s.column_mut(i).assign(&Array1::from(fit.fitted));
            }
            let dense = dense_smoother(&x, lambda);
            let agree = (&s - &dense).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(agree < 1e-6, "assembled and dense smoothers differ by {agree:e}");
            worst_trace = worst_trace.max((s.diag().sum() - df).abs());
        }
    }

    let x = sorted_uniform(50, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let r: Vec<f64> = x.iter().map(|v| v.sin() * 3.0 + rng.random_range(-0.5..0.5)).collect();
    let line = fit_smoothing_spline(&x, &r, 2.0).unwrap();
    let fitted_line = common::ols_fitted(Array2::from_shape_vec((50, 1), x.clone()).unwrap().view(), &Array1::from(r));
    let line_err = line.fitted.iter().zip(&fitted_line).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    let lin: Vec<f64> = x.iter().map(|v| 1.7 - 2.3 * v).collect();
    let mut lin_err = 0.0f64;
    for df in [3.0, 4.0, 10.0] {
        // near-ties share one fitted value, so the curve itself is compared
        let curve = fit_smoothing_spline(&x, &lin, df).unwrap().evaluate(&x);
        lin_err = lin_err.max(curve.iter().zip(&lin).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())));
    }
    outcome(
        worst_trace < 1e-3 && line_err < 1e-6 && lin_err < 1e-8,
        format!("trace error {worst_trace:.2e}, df=2 vs LS line {line_err:.2e}, linear reproduction {lin_err:.2e}"),
    )
}

fn random_additive(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales: Vec<f64> = (0..p).map(|_| rng.random_range(0.2..3.0)).collect();
    let x = Array2::from_shape_fn((n, p), |(_, j)| scales[j] * rng.random_range(-1.0..1.0));
    let y = Array1::from_shape_fn(n, |i| {
        x[[i, 0]] + (x[[i, 1]] / scales[1]).powi(2) * 2.0 - x[[i, 2]] * 0.5 + 0.5 * rng.random_range(-1.0..1.0)
    });
    Dataset::new(x, y, Family::Gaussian).unwrap()
}

fn relative_sd_error(model: &RgamModel, d: &Dataset) -> f64 {
    let f = model.nonlinear_columns(d.x()).unwrap();
    let sd_mean = d.x().columns().into_iter().map(|c| sample_sd(&c.to_vec())).sum::<f64>() / d.p() as f64;
    f.columns()
        .into_iter()
        .map(|c| (sample_sd(&c.to_vec()) / sd_mean - model.gamma).abs())
        .fold(0.0, f64::max)
}

fn rescaling_identity() -> Outcome {
    let mut worst = 0.0f64;
    let mut columns = 0;
    for seed in 0..20u64 {
        let d = random_additive(60 + 5 * seed as usize, 6 + (seed % 5) as usize, seed);
        let gamma = 0.05 + 0.9 * (seed as f64 / 19.0);
        let cfg = if seed % 2 == 0 { RgamConfig::default() } else { RgamConfig::sel() };
        let model = fit_rgam(&d, &cfg.with_gamma(gamma).with_seed(seed)).unwrap();
        columns += model.active_splines().count();
        worst = worst.max(relative_sd_error(&model, &d));
    }

    let mut worst_zero = 0.0f64;
    for seed in 100..105u64 {
        let d = random_additive(80, 10, seed);
        let path = default_lambda_path(&d, &SolverOptions::default(), DEFAULT_NLAMBDA, None).unwrap();
        let cfg = RgamConfig {
            step3_lambda: Some(path.clone()),
            ..RgamConfig::default().with_gamma(0.0).with_seed(seed)
        };
        let model = fit_rgam(&d, &cfg).unwrap();
        let lasso = fit_lasso_path(&d, &path, &SolverOptions::default()).unwrap();
        for k in 0..path.len() {
            for (a, b) in model.linear_coefficients(k).iter().zip(lasso.coefficients(k)) {
                worst_zero = worst_zero.max((a - b).abs());
            }
            for (_, c) in model.nonlinear_coefficients(k) {
                worst_zero = worst_zero.max(c.abs());
            }
        }
    }
    outcome(
        columns > 0 && worst < 1e-8 && worst_zero < 1e-8,
        format!("{columns} spline columns, max |sd ratio - gamma| {worst:.2e}; gamma=0 vs lasso {worst_zero:.2e}"),
    )
}

const BENCH_SEED: u64 = 20240;

fn scenario_medians(scenario: Scenario) -> Vec<SummaryRow> {
    let cfg = BenchConfig {
        scenarios: vec![scenario],
        snrs: vec![2.0],
        methods: vec![Method::Lasso, Method::Rgam, Method::RgamSel],
        replicates: 10,
        seed: BENCH_SEED,
        ..Default::default()
    };
    let rows = run_benchmark(&cfg).unwrap();
    assert!(rows.iter().all(|r| r.error.is_none()), "a fit failed");
    summarize(&rows)
}

fn row(summary: &[SummaryRow], method: Method) -> &SummaryRow {
    summary.iter().find(|s| s.method == method).unwrap()
}

fn nonlinear_scenario() -> Outcome {
    let s = scenario_medians(Scenario::Nonlinear);
    let (lasso, rgam, sel) = (
        row(&s, Method::Lasso).rel_error_median,
        row(&s, Method::Rgam).rel_error_median,
        row(&s, Method::RgamSel).rel_error_median,
    );
    outcome(
        rgam < 0.95 && lasso >= 0.9 && sel >= 0.9 && rgam < lasso && rgam < sel,
        format!("median relative test error: rgam {rgam:.3}, lasso {lasso:.3}, rgam_sel {sel:.3}"),
    )
}

fn hier_scenario() -> Outcome {
    let s = scenario_medians(Scenario::Hier);
    let (lasso, rgam, sel) = (
        row(&s, Method::Lasso).rel_error_median,
        row(&s, Method::Rgam).rel_error_median,
        row(&s, Method::RgamSel).rel_error_median,
    );
    let recovered = row(&s, Method::RgamSel).median_recovered;
    outcome(
        rgam < lasso && sel < lasso && recovered >= 4.0,
        format!(
            "median relative test error: rgam {rgam:.3}, rgam_sel {sel:.3}, lasso {lasso:.3}; rgam_sel recovers {recovered} of 5"
        ),
    )
}

fn degrees_of_freedom() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = Array2::from_shape_fn((30, 5), |_| rng.random_range(-1.0..1.0));
    let mu: Vec<f64> = x.rows().into_iter().map(|r| r[0] - 2.0 * r[1] + 0.5 * r[4]).collect();
    let cfg = DofConfig::new(mu, 1.0, 200, 2);
    let ols = estimate_df(&OlsFitter, x.view(), &cfg).unwrap();
    let mean = estimate_df(&GrandMeanFitter, x.view(), &cfg).unwrap();
    let id = estimate_df(&IdentityFitter, x.view(), &cfg).unwrap();
    let within = |est: &rgam::dof::DofEstimate, target: f64| (est.df_hat - target).abs() <= 2.0 * est.standard_error;

    let spec = ScenarioSpec {
        n: 100,
        p: 12,
        ..ScenarioSpec::new(Scenario::Mixed, 2.0, 5)
    };
    let data = generate_scenario(&spec).unwrap();
    let cfg = DofConfig::new(data.train_mu.to_vec(), data.sigma, 100, 17);
    let full = estimate_df(&UnpenalizedRgam::rgam(1), data.train.x(), &cfg).unwrap();
    let sel = estimate_df(&UnpenalizedRgam::rgam_sel(1), data.train.x(), &cfg).unwrap();
    let joint = (full.standard_error.powi(2) + sel.standard_error.powi(2)).sqrt();
    let ordered = sel.df_hat <= full.df_hat + 3.0 * joint;

    outcome(
        within(&ols, 6.0) && within(&mean, 1.0) && within(&id, 30.0) && ordered,
        format!(
            "ols {:.2}±{:.2} (6), mean {:.2}±{:.2} (1), identity {:.2}±{:.2} (30); unpenalized rgam {:.1}±{:.1}, rgam_sel {:.1}±{:.1}",
            ols.df_hat,
            ols.standard_error,
            mean.df_hat,
            mean.standard_error,
            id.df_hat,
            id.standard_error,
            full.df_hat,
            full.standard_error,
            sel.df_hat,
            sel.standard_error
        ),
    )
}

fn generator_fidelity() -> Outcome {
    let variance = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    };
    let mut worst_snr = 0.0f64;
    for (scenario, p) in [
        (Scenario::Linear, 10),
        (Scenario::Hier, 10),
        (Scenario::Nonlinear, 10),
        (Scenario::Nonhier, 10),
        (Scenario::Mixed, 10),
        (Scenario::MixedLarge, 30),
    ] {
        let spec = ScenarioSpec {
            n: 100_000,
            p,
            n_test: 10,
            ..ScenarioSpec::new(scenario, 2.0, 3)
        };
        let data = generate_scenario(&spec).unwrap();
        let noise: Vec<f64> = data.train.y().iter().zip(&data.train_mu).map(|(y, m)| y - m).collect();
        let snr = variance(data.train_mu.as_slice().unwrap()) / variance(&noise);
        worst_snr = worst_snr.max((snr / 2.0 - 1.0).abs());
    }

    let spec = ScenarioSpec {
        n: 1_000_000,
        p: 5,
        n_test: 1,
        ..ScenarioSpec::new(Scenario::Nonlinear, 1.0, 4)
    };
    let data = generate_scenario(&spec).unwrap();
    let x = data.train.x().column(0).to_vec();
    let corr = |b: Basis| {
        let f: Vec<f64> = x.iter().map(|&v| b.eval(v)).collect();
        let n = x.len() as f64;
        let (mx, mf) = (x.iter().sum::<f64>() / n, f.iter().sum::<f64>() / n);
        let cov: f64 = x.iter().zip(&f).map(|(a, c)| (a - mx) * (c - mf)).sum::<f64>() / n;
        cov / (variance(&x) * variance(&f)).sqrt()
    };
    let (c3, c2) = (corr(Basis::Cubic), corr(Basis::Quadratic));
    outcome(
        worst_snr < 0.02 && c3.abs() < 0.01 && c2.abs() < 0.01,
        format!("worst relative SNR error {worst_snr:.4}; corr with cubic {c3:.2e}, quadratic {c2:.2e}"),
    )
}

fn determinism() -> Outcome {
    let d = random_additive(90, 8, 77);
    let a = fit_rgam(&d, &RgamConfig::default().with_seed(5)).unwrap();
    let b = fit_rgam(&d, &RgamConfig::default().with_seed(5)).unwrap();
    let same_model = a.to_json().unwrap() == b.to_json().unwrap();

    let cfg = BenchConfig {
        scenarios: vec![Scenario::Hier, Scenario::Nonlinear],
        snrs: vec![1.0],
        replicates: 2,
        n: Some(60),
        p: Some(15),
        n_test: 300,
        seed: 8,
        ..Default::default()
    };
    let r1 = results_to_csv(&run_benchmark(&cfg).unwrap()).unwrap();
    let r2 = results_to_csv(&run_benchmark(&cfg).unwrap()).unwrap();
    let same_bench = r1 == r2;

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    a.save(&path).unwrap();
    let loaded = RgamModel::load(&path).unwrap();
    let fresh = random_additive(40, 8, 78);
    let identical = (0..a.n_lambda()).all(|k| {
        let p = a.predict(fresh.x(), k, Scale::Response).unwrap();
        let q = loaded.predict(fresh.x(), k, Scale::Response).unwrap();
        p.iter().zip(&q).all(|(u, v)| u.to_bits() == v.to_bits())
    });
    outcome(
        same_model && same_bench && identical,
        format!("model JSON identical {same_model}, benchmark CSV identical {same_bench}, round-trip predictions identical {identical}"),
    )
}
