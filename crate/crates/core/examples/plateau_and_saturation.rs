//! Strong-coupling behaviour of named gates: plateau, approach shape and the
//! coupling at which the curve settles within ε of its plateau.
//!
//! ```text
//! cargo run --release --example plateau_and_saturation
//! ```

use qudit_agi::asymptotics::{default_grid, plateau_bounds, saturation_point, sweep_agi};
use qudit_agi::{GateKind, GateSpec, NoiseKind, NoiseSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let d = 4;
    let (min, mean, max) = plateau_bounds(d)?;
    println!("d = {d}: plateau bounds [{min:.4}, {max:.4}], Haar average {mean:.4}\n");
    let noise = NoiseSpec::new(NoiseKind::DephasingJz, d)?;
    let grid = default_grid();
    let x_eta = (3 * d - 2) as f64 / (4 * d) as f64;
    println!("{:<10} {:>10} {:>12} {:>12} {:>12}", "gate", "plateau", "AGI(1e4)", "shape", "(γt)*");
    for kind in [GateKind::Identity, GateKind::ClockZ, GateKind::XPower(x_eta), GateKind::ShiftX, GateKind::Qft] {
        let curve = sweep_agi(&GateSpec::new(kind, d)?, &noise, &grid)?;
        let saturation = saturation_point(&curve, 1e-8).map(|s| format!("{s:.4e}")).unwrap_or_else(|e| e.to_string());
        println!(
            "{:<10} {:>10.6} {:>12.6} {:>12} {saturation:>12}",
            kind.label(),
            curve.plateau,
            curve.agi.last().unwrap(),
            curve.classification.map_or("unclassified".to_string(), |c| format!("{c:?}")),
        );
    }
    Ok(())
}
