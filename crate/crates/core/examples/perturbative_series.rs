//! Partial sums of the perturbative AGI series for the QFT gate against the
//! exact infidelity, orders one to four.
//!
//! ```text
//! cargo run --release --example perturbative_series
//! ```

use qudit_agi::channel::Generator;
use qudit_agi::perturbation::{Cutoffs, SeriesCoefficients};
use qudit_agi::{GateKind, GateSpec, NoiseKind, NoiseSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let d = 4;
    let g = Generator::new(&GateSpec::new(GateKind::Qft, d)?, &NoiseSpec::new(NoiseKind::DephasingJz, d)?)?;
    let m_max = 4;
    let cutoffs = Cutoffs::adaptive(&g, 1.0, m_max, 1e-10)?;
    println!("nested-sum cutoff N = {}", cutoffs.n);

    // The coefficients are independent of γt; build them once.
    let coefficients = SeriesCoefficients::new(&g, 1.0, m_max, cutoffs)?;
    println!("{:>6} {:>14} |exact − partial sum|, orders 1..4", "γt", "exact");
    for gamma_t in [0.01, 0.05, 0.1, 0.2, 0.5] {
        let exact = g.agi(gamma_t)?;
        let series = coefficients.series(gamma_t);
        let residuals: Vec<String> =
            series.partial_sums.iter().map(|s| format!("{:.3e}", (exact - s).abs())).collect();
        println!("{gamma_t:>6} {exact:>14.10} {}", residuals.join("  "));
    }
    Ok(())
}
