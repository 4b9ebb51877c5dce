//! Gate-dependent second-order traces, the critical order s_ε at which they
//! stop contributing, and the operator-form evaluation of the same sum.
//!
//! ```text
//! cargo run --release --example second_order_cutoff
//! ```

use qudit_agi::channel::Generator;
use qudit_agi::asymptotics::{fit_model, FitModel};
use qudit_agi::perturbation::{
    agi_second_order_operator_form, convergence_cutoff, convergence_cutoff_with, second_order_value, TraceRoute,
};
use qudit_agi::{GateKind, GateSpec, NoiseKind, NoiseSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let eps = 1e-8;
    println!("critical order s_ε of the X gate (ε = {eps:e})");
    for d in [2, 4, 8, 16, 32] {
        let report = convergence_cutoff(&GateSpec::new(GateKind::ShiftX, d)?, &NoiseSpec::new(NoiseKind::DephasingJz, d)?, 1.0, eps)?;
        println!("  d = {d:>2}: s_ε = {:>2}, 𝓘⁽²⁾(γt = 0.1) = {:+.6e}", report.s_epsilon, second_order_value(&report, 0.1));
    }

    let d = 3;
    let gate = GateSpec::new(GateKind::Qft, d)?;
    let noise = NoiseSpec::new(NoiseKind::BitFlipJx, d)?;
    let report = convergence_cutoff(&gate, &noise, 1.0, eps)?;
    let superop = second_order_value(&report, 0.1);
    let operator = agi_second_order_operator_form(&gate, &noise, 0.1, 1.0, report.s_epsilon)?;
    println!("\nQFT, d = {d}, Jx: superoperator {superop:.15e}, operator form {operator:.15e}");

    // s_ε grows linearly with the gate time.
    let g = Generator::new(&GateSpec::new(GateKind::ShiftX, 8)?, &NoiseSpec::new(NoiseKind::DephasingJz, 8)?)?;
    let ts: Vec<f64> = (0..9).map(|i| 0.5 + 0.5 * i as f64).collect();
    let s: Vec<f64> = ts
        .iter()
        .map(|&t| convergence_cutoff_with(&g, t, eps, TraceRoute::Auto).map(|r| r.s_epsilon as f64))
        .collect::<Result<_, _>>()?;
    let fit = fit_model(&ts, &s, FitModel::Linear, None)?;
    println!("\nX gate, d = 8: s_ε(t) = {:.2} + {:.2}·t (R² = {:.5})", fit.params[0], fit.params[1], fit.r_squared);
    Ok(())
}
