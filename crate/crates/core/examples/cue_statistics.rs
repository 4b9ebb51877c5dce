//! Spectral checks of the Haar sampler: uniform level density and nearest
//! neighbour spacings against the Wigner surmise.
//!
//! ```text
//! cargo run --release --example cue_statistics
//! ```

use std::f64::consts::PI;

use qudit_agi::haar_stats::{chi_square_uniform, kl_divergence, unfold_spacings, wigner_surmise, Histogram, SpectralSample};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (d, n) in [(2, 5000), (10, 1000), (100, 100)] {
        let sample = SpectralSample::cue(d, n, 99)?;
        let phases = Histogram::new(&sample.phases, -PI, PI, 100)?;
        let chi = chi_square_uniform(&phases)?;
        let spacings = Histogram::new(&unfold_spacings(&sample), 0.0, 4.0, 40)?;
        println!(
            "d = {d:>3}, {:>5} eigenvalues: χ² = {:.1} (dof {}, p = {:.3}), D_KL(phases‖uniform) = {:.2e}, D_KL(spacings‖Wigner) = {:.2e}",
            sample.phases.len(),
            chi.statistic,
            chi.dof,
            chi.p_value,
            kl_divergence(&phases, |_| 1.0 / (2.0 * PI)),
            kl_divergence(&spacings, wigner_surmise),
        );
    }
    Ok(())
}
