//! Spectral statistics of the Haar sampler and plateau distributions of
//! random-gate ensembles.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::asymptotics::{
    default_grid, plateau_bounds, saturation_point, sweep_generator, Classification, DEFAULT_SATURATION_EPSILON,
};
use crate::channel::Generator;
use crate::densemath::{spectral_decompose_normal, ComplexMatrix};
use crate::error::{Error, Result};
use crate::qudit::{haar_random_unitary_stream, GateKind, GateSpec, NoiseSpec};

/// Eigenphases of a unitary in `[−π, π)`, in no particular order.
pub fn eigenphases(u: &ComplexMatrix) -> Result<Vec<f64>> {
    let n = u.require_square("eigenphases")?;
    let tol = 1e-10 * (n as f64).sqrt();
    if !u.is_unitary(tol) {
        let defect = (&u.adjoint().matmul(u) - &ComplexMatrix::identity(n)).frobenius_norm();
        return Err(Error::NotUnitary(defect));
    }
    let dec = spectral_decompose_normal(u)?;
    Ok(dec.eigenvalues.iter().map(|z| wrap_phase(z.arg())).collect())
}

fn wrap_phase(theta: f64) -> f64 {
    if theta >= PI {
        theta - 2.0 * PI
    } else {
        theta
    }
}

/// Pooled eigenphases of `n_matrices` unitaries of dimension `dim`.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralSample {
    /// `dim` consecutive entries per matrix
    pub phases: Vec<f64>,
    pub dim: usize,
    pub n_matrices: usize,
}

impl SpectralSample {
    pub fn from_unitaries(us: &[ComplexMatrix]) -> Result<Self> {
        let dim = us.first().map(|u| u.rows()).ok_or_else(|| Error::InvalidParameter("empty sample".into()))?;
        let mut phases = Vec::with_capacity(dim * us.len());
        for u in us {
            if u.rows() != dim {
                return Err(Error::Dimension("mixed dimensions in spectral sample".into()));
            }
            phases.extend(eigenphases(u)?);
        }
        Ok(Self { phases, dim, n_matrices: us.len() })
    }

    /// Eigenphases of `n_matrices` Haar unitaries; matrix `i` uses stream `i`
    /// of `seed`.
    pub fn cue(dim: usize, n_matrices: usize, seed: u64) -> Result<Self> {
        if dim < 2 || n_matrices == 0 {
            return Err(Error::InvalidParameter(format!("CUE sample of {n_matrices} matrices at d = {dim}")));
        }
        let per: Vec<Vec<f64>> = (0..n_matrices)
            .into_par_iter()
            .map(|i| eigenphases(&haar_random_unitary_stream(dim, seed, i as u64)))
            .collect::<Result<_>>()?;
        Ok(Self { phases: per.concat(), dim, n_matrices })
    }

    pub fn matrices(&self) -> impl Iterator<Item = &[f64]> {
        self.phases.chunks(self.dim)
    }
}

/// Nearest-neighbour spacings `(d/2π)(θ_{j+1} − θ_j)` of each sorted spectrum,
/// pooled.
pub fn unfold_spacings(sample: &SpectralSample) -> Vec<f64> {
    let scale = sample.dim as f64 / (2.0 * PI);
    sample
        .matrices()
        .flat_map(|m| {
            let mut sorted = m.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted.windows(2).map(|w| scale * (w[1] - w[0])).collect::<Vec<_>>()
        })
        .collect()
}

/// `p(s) = (32 s²/π²) e^{−4s²/π}`.
pub fn wigner_surmise(s: f64) -> f64 {
    32.0 * s * s / (PI * PI) * (-4.0 * s * s / PI).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Counts normalised so that `Σ density·width = 1`.
    pub density: Vec<f64>,
    /// Samples outside `[edges₀, edges_n]`.
    pub outside: u64,
}

impl Histogram {
    /// Equal-width bins on `[lo, hi]`; the upper edge is inclusive.
    pub fn new(data: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        let mut h = Self::empty(lo, hi, bins)?;
        for &x in data {
            h.insert(x);
        }
        h.normalise();
        Ok(h)
    }

    fn empty(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(hi > lo) || bins == 0 || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!("histogram [{lo}, {hi}] with {bins} bins")));
        }
        let edges = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
        Ok(Self { edges, counts: vec![0; bins], density: vec![0.0; bins], outside: 0 })
    }

    fn insert(&mut self, x: f64) {
        let (lo, hi) = (self.edges[0], self.edges[self.edges.len() - 1]);
        if !(x >= lo && x <= hi) {
            self.outside += 1;
            return;
        }
        let bins = self.counts.len();
        let k = (((x - lo) / (hi - lo)) * bins as f64) as usize;
        self.counts[k.min(bins - 1)] += 1;
    }

    fn normalise(&mut self) {
        let total: u64 = self.counts.iter().sum();
        let width = self.width();
        self.density = self
            .counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / (total as f64 * width) })
            .collect();
    }

    /// Sum of two histograms on identical bins.
    pub fn merge(&self, other: &Histogram) -> Result<Histogram> {
        if self.edges != other.edges {
            return Err(Error::InvalidParameter("histograms have different bins".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        out.outside += other.outside;
        out.normalise();
        Ok(out)
    }

    pub fn width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// `⌈log₂(n + 1)⌉` bins.
pub fn sturges_bins(n: usize) -> usize {
    ((n as f64 + 1.0).log2().ceil() as usize).max(1)
}

/// `Σ pᵢ ln(pᵢ/qᵢ)·width` over non-empty bins, `q` taken at bin centres;
/// `+∞` when `q` vanishes where `p` does not.
pub fn kl_divergence(p: &Histogram, q: impl Fn(f64) -> f64) -> f64 {
    let width = p.width();
    let mut total = 0.0;
    for (density, center) in p.density.iter().zip(p.centers()) {
        if *density == 0.0 {
            continue;
        }
        let qv = q(center);
        if !(qv > 0.0) {
            return f64::INFINITY;
        }
        total += density * (density / qv).ln() * width;
    }
    total
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson χ² of the histogram counts against the uniform density on its
/// range.
pub fn chi_square_uniform(h: &Histogram) -> Result<ChiSquare> {
    let bins = h.counts.len();
    if bins < 2 {
        return Err(Error::InvalidParameter("χ² test needs at least two bins".into()));
    }
    let total = h.total() as f64;
    if total == 0.0 {
        return Err(Error::InvalidParameter("χ² test on an empty histogram".into()));
    }
    let expected = total / bins as f64;
    let statistic = h.counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dof = bins - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(ChiSquare { statistic, dof, p_value: 1.0 - dist.cdf(statistic) })
}

/// One gate of a plateau ensemble.
#[derive(Clone, Debug, Serialize)]
pub struct GateRecord {
    pub index: usize,
    pub gate: GateSpec,
    pub plateau: f64,
    pub classification: Option<Classification>,
    pub overshoot_height: Option<f64>,
    pub saturation: Option<f64>,
    pub ambiguous: bool,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PlateauDistribution {
    pub dim: usize,
    pub histogram: Histogram,
    pub mean: f64,
    pub std_dev: f64,
    pub monotonic_fraction: f64,
    /// Unconverged gates, excluded from the statistics.
    pub rejected: usize,
    pub records: Vec<GateRecord>,
}

/// Plateau statistics over `n_gates` Haar gates; gate `i` is
/// `HaarRandom { seed, stream: i }`.
pub fn plateau_distribution(d: usize, n_gates: usize, noise: &NoiseSpec, seed: u64) -> Result<PlateauDistribution> {
    plateau_distribution_on(d, n_gates, noise, seed, &default_grid(), DEFAULT_SATURATION_EPSILON)
}

pub fn plateau_distribution_on(
    d: usize,
    n_gates: usize,
    noise: &NoiseSpec,
    seed: u64,
    grid: &[f64],
    epsilon: f64,
) -> Result<PlateauDistribution> {
    if n_gates < 100 {
        return Err(Error::InvalidParameter(format!("n_gates = {n_gates} < 100")));
    }
    if noise.dim != d {
        return Err(Error::Dimension(format!("noise dimension {} ≠ {d}", noise.dim)));
    }
    let records: Vec<GateRecord> = (0..n_gates)
        .into_par_iter()
        .map(|i| {
            let gate = GateSpec::new(GateKind::HaarRandom { seed, stream: i as u64 }, d)?;
            let curve = sweep_generator(&Generator::new(&gate, noise)?, grid)?;
            Ok(GateRecord {
                index: i,
                gate,
                plateau: curve.plateau,
                classification: curve.classification,
                overshoot_height: curve.overshoot_height,
                saturation: if curve.converged { saturation_point(&curve, epsilon).ok() } else { None },
                ambiguous: curve.ambiguous,
                converged: curve.converged,
            })
        })
        .collect::<Result<_>>()?;
    summarise(d, records)
}

fn summarise(d: usize, records: Vec<GateRecord>) -> Result<PlateauDistribution> {
    let accepted: Vec<&GateRecord> = records.iter().filter(|r| r.converged).collect();
    let rejected = records.len() - accepted.len();
    if accepted.is_empty() {
        return Err(Error::Unconverged("no gate reached its plateau".into()));
    }
    let n = accepted.len() as f64;
    let plateaus: Vec<f64> = accepted.iter().map(|r| r.plateau).collect();
    let mean = plateaus.iter().sum::<f64>() / n;
    let std_dev = if accepted.len() > 1 {
        (plateaus.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let monotonic = accepted
        .iter()
        .filter(|r| r.classification == Some(Classification::Monotonic))
        .count();
    let (lo, _, hi) = plateau_bounds(d)?;
    let bins = if d == 2 { sturges_bins(accepted.len()) } else { 100 };
    // plateaus on a bound may sit one rounding error outside it
    let clamped: Vec<f64> = plateaus
        .iter()
        .map(|&p| if (lo - 1e-9..=hi + 1e-9).contains(&p) { p.clamp(lo, hi) } else { p })
        .collect();
    Ok(PlateauDistribution {
        dim: d,
        histogram: Histogram::new(&clamped, lo, hi, bins)?,
        mean,
        std_dev,
        monotonic_fraction: monotonic as f64 / n,
        rejected,
        records,
    })
}
