//! Fits a lasso path to the bundled toy data and prints how the support grows.

use rgam::lasso::{fit_lasso, SolverOptions};
use rgam::{load_csv, Family};

fn main() -> rgam::Result<()> {
    let data = load_csv(concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy.csv"), "y", Family::Gaussian)?;
    let model = fit_lasso(&data, &SolverOptions::default(), 20, None)?;
    println!("{:>5} {:>10} {:>10}  nonzero", "index", "lambda", "deviance");
    for k in 0..model.n_lambda() {
        println!(
            "{k:>5} {:>10.4} {:>10.4}  {:?}",
            model.lambda.values()[k],
            model.deviances[k],
            model.nonzero(k)
        );
    }
    Ok(())
}
