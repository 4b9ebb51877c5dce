//! Saturation points of X^η gates across dimensions and the power law
//! `(γt)* = α (d − β)^δ` fitted to them.
//!
//! ```text
//! cargo run --release --example saturation_power_law
//! ```

use qudit_agi::asymptotics::{default_grid, fit_model, saturation_point, sweep_agi, FitModel};
use qudit_agi::{GateKind, GateSpec, NoiseKind, NoiseSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = default_grid();
    let dims: Vec<usize> = (2..=8).collect();
    let xs: Vec<f64> = dims.iter().map(|&d| d as f64).collect();
    for eta in [0.25, 0.5, 1.0] {
        let mut sat = Vec::new();
        for &d in &dims {
            let curve = sweep_agi(&GateSpec::new(GateKind::XPower(eta), d)?, &NoiseSpec::new(NoiseKind::DephasingJz, d)?, &grid)?;
            sat.push(saturation_point(&curve, 1e-8)?);
        }
        let fit = fit_model(&xs, &sat, FitModel::PowerLaw, None)?;
        let p = &fit.params;
        println!("η = {eta}: (γt)* = {:.3e}·(d − {:.3})^{:.3}, R² = {:.6}", p[0], p[1], p[2], fit.r_squared);
        let shown: Vec<String> = sat.iter().map(|s| format!("{s:.3e}")).collect();
        println!("    {}", shown.join(" "));
    }
    Ok(())
}
