//! Traces of powers of the dissipator and the resummed gate-independent AGI,
//! which is exact for the identity gate.
//!
//! ```text
//! cargo run --release --example gate_independent_terms
//! ```

use qudit_agi::channel::Generator;
use qudit_agi::perturbation::{agi_first_order, gate_independent_agi, trace_lindblad_power, LindbladTraceRoute};
use qudit_agi::{GateKind, GateSpec, NoiseKind, NoiseSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for d in [2, 3, 4] {
        let noise = NoiseSpec::new(NoiseKind::DephasingJz, d)?;
        let traces: Vec<String> = (1..=5)
            .map(|m| {
                let a = trace_lindblad_power(&noise, m, LindbladTraceRoute::Superop)?;
                let b = trace_lindblad_power(&noise, m, LindbladTraceRoute::Multinomial)?;
                Ok(format!("{a:.6} ({:.0e})", (a - b).abs()))
            })
            .collect::<Result<_, qudit_agi::Error>>()?;
        println!("d = {d}: Tr𝓛^m, m = 1..5: {}", traces.join(", "));
    }

    let d = 4;
    let noise = NoiseSpec::new(NoiseKind::DephasingJz, d)?;
    let identity = Generator::new(&GateSpec::new(GateKind::Identity, d)?, &noise)?;
    println!("\n{:>6} {:>16} {:>16} {:>16}", "γt", "exact identity", "resummed", "first order");
    for gamma_t in [0.01, 0.1, 1.0, 10.0] {
        println!(
            "{gamma_t:>6} {:>16.12} {:>16.12} {:>16.12}",
            identity.agi(gamma_t)?,
            gate_independent_agi(&noise, gamma_t, d)?,
            agi_first_order(&noise, gamma_t, d)?
        );
    }
    Ok(())
}
