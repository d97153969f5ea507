//! Saves a fitted model as JSON, reloads it and checks predictions match bit for bit.

use rgam::rgam::{fit_rgam, RgamConfig, RgamModel};
use rgam::{load_csv, Family, Scale};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = load_csv(concat!(env!("CARGO_MANIFEST_DIR"), "/data/toy.csv"), "y", Family::Gaussian)?;
    let model = fit_rgam(&data, &RgamConfig::default().with_seed(5))?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.json");
    model.save(&path)?;
    println!("wrote {} bytes", std::fs::metadata(&path)?.len());

    let loaded = RgamModel::load(&path)?;
    let k = model.n_lambda() / 2;
    let a = model.predict(data.x(), k, Scale::Response)?;
    let b = loaded.predict(data.x(), k, Scale::Response)?;
    let identical = a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits());
    println!("predictions identical after reload: {identical}");
    Ok(())
}
