use ndarray::ArrayView1;
use rgam::sim::*;

fn variance(v: ArrayView1<f64>) -> f64 {
    let m = v.mean().unwrap();
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn empirical_snr_matches_target() {
    for (scenario, p) in [
        (Scenario::Linear, 10),
        (Scenario::Hier, 10),
        (Scenario::Nonlinear, 10),
        (Scenario::Nonhier, 10),
        (Scenario::Mixed, 10),
        (Scenario::MixedLarge, 30),
    ] {
        for snr in [0.5, 2.0] {
            let spec = ScenarioSpec {
                n: 100_000,
                p,
                n_test: 10,
                ..ScenarioSpec::new(scenario, snr, 42)
            };
            let data = generate_scenario(&spec).unwrap();
            let noise = &data.train.y() - &data.train_mu;
            let empirical = variance(data.train_mu.view()) / variance(noise.view());
            assert!((empirical / snr - 1.0).abs() < 0.02, "{scenario} snr {snr}: {empirical}");
            // the closed-form signal variance agrees with the draws too
            let ratio = variance(data.train_mu.view()) / scenario.signal_variance();
            assert!((ratio - 1.0).abs() < 0.02, "{scenario}: {ratio}");
        }
    }
}

#[test]
fn linear_and_nonlinear_parts_are_uncorrelated() {
    let spec = ScenarioSpec {
        n: 1_000_000,
        p: 5,
        n_test: 1,
        ..ScenarioSpec::new(Scenario::Nonlinear, 1.0, 7)
    };
    let data = generate_scenario(&spec).unwrap();
    let x = data.train.x().column(0).to_vec();
    assert!(x.iter().all(|v| (-1.0..=1.0).contains(v)));
    let cubic: Vec<f64> = x.iter().map(|&v| Basis::Cubic.eval(v)).collect();
    let quad: Vec<f64> = x.iter().map(|&v| Basis::Quadratic.eval(v)).collect();
    assert!(correlation(&x, &cubic).abs() < 0.01);
    assert!(correlation(&x, &quad).abs() < 0.01);
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
    assert!((var - 1.0 / 3.0).abs() < 2e-3);
}

fn small_bench(seed: u64) -> BenchConfig {
    BenchConfig {
        scenarios: vec![Scenario::Hier],
        snrs: vec![2.0],
        methods: Method::ALL.to_vec(),
        replicates: 10,
        nfolds: 5,
        n: Some(60),
        p: Some(10),
        n_test: 200,
        seed,
    }
}

#[test]
fn benchmark_rows_are_complete_and_reproducible() {
    let rows = run_benchmark(&small_bench(5)).unwrap();
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().all(|r| r.error.is_none()));
    for r in rows.iter().filter(|r| r.method == Method::Null) {
        assert_eq!(r.relative_test_error, 1.0);
    }
    let again = run_benchmark(&small_bench(5)).unwrap();
    assert_eq!(results_to_csv(&rows).unwrap(), results_to_csv(&again).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");
    write_results_csv(&rows, &path).unwrap();
    let back = read_results_csv(&path).unwrap();
    assert_eq!(results_to_csv(&back).unwrap(), results_to_csv(&rows).unwrap());

    let summary = summarize(&rows);
    assert_eq!(summary.len(), 4);
    for s in &summary {
        assert_eq!(s.runs, 10);
        let mut errs: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == s.method)
            .map(|r| r.relative_test_error)
            .collect();
        errs.sort_by(f64::total_cmp);
        assert!((s.rel_error_median - (errs[4] + errs[5]) / 2.0).abs() < 1e-12);
        assert!(s.rel_error_q1 <= s.rel_error_median && s.rel_error_median <= s.rel_error_q3);
    }
}

#[test]
fn adding_cells_leaves_existing_cells_alone() {
    let mut small = small_bench(11);
    small.replicates = 2;
    small.methods = vec![Method::Lasso];
    let mut large = small.clone();
    large.replicates = 3;
    large.snrs = vec![2.0, 5.0];
    let a = run_benchmark(&small).unwrap();
    let b = run_benchmark(&large).unwrap();
    for r in &a {
        let twin = b
            .iter()
            .find(|s| s.snr == r.snr && s.replicate == r.replicate && s.method == r.method)
            .unwrap();
        assert_eq!(twin.seed, r.seed);
        assert_eq!(twin.relative_test_error.to_bits(), r.relative_test_error.to_bits());
    }
}
