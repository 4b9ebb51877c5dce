//! Exact channel propagation for a few gates under each collapse operator,
//! with a Monte-Carlo estimate of the fidelity alongside the trace formula.
//!
//! ```text
//! cargo run --release --example channel_fidelity
//! ```

use qudit_agi::channel::{agf_exact, agf_montecarlo, propagate};
use qudit_agi::{GateKind, GateSpec, NoiseKind, NoiseSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let d = 3;
    let gamma_t = 0.5;
    println!("d = {d}, γt = {gamma_t}");
    println!("{:<10} {:<8} {:>12} {:>12} {:>10}", "gate", "noise", "AGF exact", "AGF MC", "σ");
    for kind in [GateKind::Identity, GateKind::ShiftX, GateKind::Qft, GateKind::TGate] {
        for noise in [NoiseKind::DephasingJz, NoiseKind::BitFlipJx, NoiseKind::RelaxationJminus] {
            let channel = propagate(&GateSpec::new(kind, d)?, &NoiseSpec::new(noise, d)?, gamma_t)?;
            channel.check_invariants()?;
            let exact = agf_exact(&channel);
            let (mc, se) = agf_montecarlo(&channel, 20_000, 1)?;
            println!("{:<10} {:<8} {exact:>12.8} {mc:>12.8} {se:>10.2e}", kind.label(), noise.label());
        }
    }

    // The qubit identity gate under dephasing has a closed form.
    let channel = propagate(&GateSpec::new(GateKind::Identity, 2)?, &NoiseSpec::new(NoiseKind::DephasingJz, 2)?, 1.0)?;
    let closed = (1.0 - (-0.5f64).exp()) / 3.0;
    println!("\nidentity, d = 2, γt = 1: AGI {:.12} (closed form {closed:.12})", 1.0 - agf_exact(&channel));
    Ok(())
}
