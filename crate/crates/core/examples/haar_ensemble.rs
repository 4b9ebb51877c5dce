//! Plateau distribution over Haar-random qubit gates, with the split into
//! monotonic and overshooting curves.
//!
//! ```text
//! cargo run --release --example haar_ensemble [n_gates]
//! ```

use qudit_agi::haar_stats::plateau_distribution;
use qudit_agi::{NoiseKind, NoiseSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1000);
    let d = 2;
    let dist = plateau_distribution(d, n, &NoiseSpec::new(NoiseKind::DephasingJz, d)?, 2024)?;
    println!(
        "{n} gates: mean plateau {:.4} ± {:.4}, monotonic {:.1}%, rejected {}",
        dist.mean,
        dist.std_dev,
        100.0 * dist.monotonic_fraction,
        dist.rejected
    );
    let peak = dist.histogram.counts.iter().copied().max().unwrap_or(1).max(1);
    for (center, count) in dist.histogram.centers().iter().zip(&dist.histogram.counts) {
        let bar = "#".repeat((60 * count / peak) as usize);
        println!("{center:.4} {count:>6} {bar}");
    }
    let worst = dist
        .records
        .iter()
        .filter_map(|r| r.overshoot_height.map(|h| (h, r.index)))
        .max_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((height, index)) = worst {
        println!("largest overshoot {height:.4e} (gate {index})");
    }
    Ok(())
}
