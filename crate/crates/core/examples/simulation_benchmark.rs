//! A small benchmark grid with per-cell medians.

use rgam::sim::{run_benchmark, summarize, BenchConfig, Method, Scenario};

fn main() -> rgam::Result<()> {
    let cfg = BenchConfig {
        scenarios: vec![Scenario::Linear, Scenario::Nonlinear],
        snrs: vec![2.0],
        methods: Method::ALL.to_vec(),
        replicates: 3,
        n: Some(100),
        p: Some(20),
        n_test: 1000,
        seed: 2024,
        ..BenchConfig::default()
    };
    let rows = run_benchmark(&cfg)?;
    println!("{:>10} {:>4} {:>9} {:>8} {:>9}", "scenario", "snr", "method", "median", "selected");
    for s in summarize(&rows) {
        println!(
            "{:>10} {:>4} {:>9} {:>8.3} {:>9.1}",
            s.scenario.as_str(),
            s.snr,
            s.method.as_str(),
            s.rel_error_median,
            s.median_selected
        );
    }
    Ok(())
}
