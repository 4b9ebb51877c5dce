//! Exact channel propagation `ℰ = exp(𝒮 + γt𝓛)` and average gate fidelity.

use crate::densemath::{expm, unvec, vec, ComplexMatrix, C64, ZERO};
use crate::error::{Error, Result};
use crate::qudit::{
    build_collapse, build_gate, control_hamiltonian, haar_random_state, seeded_rng,
    super_hamiltonian, super_lindblad, super_unitary, GateSpec, NoiseSpec,
};

/// Superoperators of one (gate, noise) pair, built once and reused across a
/// γt sweep.
#[derive(Clone, Debug)]
pub struct Generator {
    pub gate: GateSpec,
    pub noise: NoiseSpec,
    pub target: ComplexMatrix,
    pub hamiltonian: ComplexMatrix,
    pub collapse: ComplexMatrix,
    /// 𝒮
    pub s: ComplexMatrix,
    /// 𝓛
    pub l: ComplexMatrix,
    /// 𝒰
    pub u: ComplexMatrix,
}

impl Generator {
    pub fn new(gate: &GateSpec, noise: &NoiseSpec) -> Result<Self> {
        if gate.dim != noise.dim {
            return Err(Error::Dimension(format!(
                "gate dimension {} differs from noise dimension {}",
                gate.dim, noise.dim
            )));
        }
        let target = build_gate(gate)?;
        let hamiltonian = control_hamiltonian(&target)?;
        let collapse = build_collapse(noise)?;
        Ok(Self {
            gate: *gate,
            noise: *noise,
            s: super_hamiltonian(&hamiltonian)?,
            l: super_lindblad(&collapse)?,
            u: super_unitary(&target)?,
            target,
            hamiltonian,
            collapse,
        })
    }

    pub fn dim(&self) -> usize {
        self.gate.dim
    }

    /// `𝒮 + γt·𝓛`.
    pub fn liouvillian(&self, gamma_t: f64) -> ComplexMatrix {
        &self.s + &self.l.scale_real(gamma_t)
    }

    /// `exp((𝒮 + γt𝓛)·time)`; `time = 1` is the gate.
    pub fn evolve(&self, gamma_t: f64, time: f64) -> Result<ComplexMatrix> {
        expm(&self.liouvillian(gamma_t).scale_real(time))
    }

    pub fn channel(&self, gamma_t: f64) -> Result<QuantumChannel> {
        if !(gamma_t >= 0.0) || !gamma_t.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma_t = {gamma_t}")));
        }
        Ok(QuantumChannel {
            superop: self.evolve(gamma_t, 1.0)?,
            dim: self.dim(),
            gamma_t,
            gate: self.gate,
            noise: self.noise,
            target: self.u.clone(),
        })
    }

    /// Exact AGI at coupling `gamma_t`.
    pub fn agi(&self, gamma_t: f64) -> Result<f64> {
        Ok(1.0 - agf_exact(&self.channel(gamma_t)?))
    }

    /// Stationary projector `P₀ = lim_{τ→∞} exp(τ𝓛)` of the dissipator.
    pub fn dissipative_projector(&self) -> Result<ComplexMatrix> {
        stationary_projector(&self.l)
    }

    /// The γt → ∞ limit of the channel, `P₀ exp(P₀𝒮P₀) P₀`.
    pub fn strong_coupling_channel(&self) -> Result<QuantumChannel> {
        let p0 = self.dissipative_projector()?;
        let projected = p0.matmul(&self.s).matmul(&p0);
        let superop = if projected.max_abs() < 1e-14 {
            p0
        } else {
            p0.matmul(&expm(&projected)?).matmul(&p0)
        };
        Ok(QuantumChannel {
            superop,
            dim: self.dim(),
            gamma_t: f64::INFINITY,
            gate: self.gate,
            noise: self.noise,
            target: self.u.clone(),
        })
    }
}

/// `lim_{τ→∞} exp(τ𝓛)` by repeated squaring of `exp(𝓛)`, polished with the
/// idempotent iteration `P ← 3P² − 2P³`.
///
/// Squaring stops once successive iterates agree to rounding level; beyond
/// that point round-off on the unit eigenvalues would grow geometrically.
pub fn stationary_projector(l: &ComplexMatrix) -> Result<ComplexMatrix> {
    let scale = l.one_norm().max(1.0);
    let mut p = expm(&l.scale_real(1.0 / scale))?;
    let mut best = f64::INFINITY;
    for _ in 0..64 {
        let next = p.matmul(&p);
        let change = (&next - &p).max_abs();
        if change < 1e-8 && change >= best {
            break;
        }
        best = best.min(change);
        p = next;
        if change < 1e-15 {
            break;
        }
    }
    for _ in 0..8 {
        let p2 = p.matmul(&p);
        let next = &p2.scale_real(3.0) - &p2.matmul(&p).scale_real(2.0);
        let change = (&next - &p).max_abs();
        p = next;
        if change < 1e-15 {
            break;
        }
    }
    let defect = (&p.matmul(&p) - &p).max_abs();
    if defect.is_finite() && defect < 1e-10 * p.max_abs().max(1.0) {
        Ok(p)
    } else {
        Err(Error::NoConvergence("dissipator has no stationary projector".into()))
    }
}

#[derive(Clone, Debug)]
pub struct QuantumChannel {
    pub superop: ComplexMatrix,
    pub dim: usize,
    pub gamma_t: f64,
    pub gate: GateSpec,
    pub noise: NoiseSpec,
    /// Ideal superoperator 𝒰 of the target gate.
    pub target: ComplexMatrix,
}

/// Trace-preservation and Hermiticity-preservation defects of a channel.
#[derive(Clone, Copy, Debug)]
pub struct ChannelDefects {
    pub trace_preservation: f64,
    pub hermiticity: f64,
}

impl QuantumChannel {
    /// Applies the channel to a density matrix.
    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        unvec(&ComplexMatrix::column_vector(self.superop.apply(vec(rho)?.as_slice())))
    }

    /// `‖vec(1)ᵀℰ − vec(1)ᵀ‖_max` and the Hermiticity defect on `probes`
    /// random Hermitian inputs.
    pub fn defects(&self, probes: usize, seed: u64) -> ChannelDefects {
        let d = self.dim;
        let mut tp: f64 = 0.0;
        for col in 0..d * d {
            let mut acc = ZERO;
            for k in 0..d {
                acc += self.superop[(k * d + k, col)];
            }
            let want = if col % (d + 1) == 0 { 1.0 } else { 0.0 };
            tp = tp.max((acc - C64::new(want, 0.0)).norm());
        }
        let mut rng = seeded_rng(seed, 0);
        let mut herm: f64 = 0.0;
        for _ in 0..probes {
            let a = haar_random_state(d, &mut rng);
            let b = haar_random_state(d, &mut rng);
            let mut rho = ComplexMatrix::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    rho[(i, j)] = a[i] * a[j].conj() - b[i] * b[j].conj() * 0.5;
                }
            }
            if let Ok(out) = self.apply(&rho) {
                herm = herm.max((&out - &out.adjoint()).frobenius_norm());
            }
        }
        ChannelDefects { trace_preservation: tp, hermiticity: herm }
    }

    pub fn check_invariants(&self) -> Result<()> {
        let defects = self.defects(4, 17);
        if defects.trace_preservation > 1e-9 || defects.hermiticity > 1e-9 {
            return Err(Error::NumericRange(format!(
                "channel invariants violated: trace {:.3e}, hermiticity {:.3e}",
                defects.trace_preservation, defects.hermiticity
            )));
        }
        Ok(())
    }
}

/// Channel of `gate` under `noise` at coupling `gamma_t` (unit gate time).
pub fn propagate(gate: &GateSpec, noise: &NoiseSpec, gamma_t: f64) -> Result<QuantumChannel> {
    Generator::new(gate, noise)?.channel(gamma_t)
}

/// `F = (Tr M + Tr M[1]) / (d(d+1))` with `M = 𝒰†ℰ`.
pub fn agf_exact(channel: &QuantumChannel) -> f64 {
    let d = channel.dim;
    let u = &channel.target;
    let e = &channel.superop;
    let trace_m: C64 = u
        .as_slice()
        .iter()
        .zip(e.as_slice())
        .map(|(a, b)| a.conj() * b)
        .sum();
    let id = vec(&ComplexMatrix::identity(d)).expect("square identity");
    let m_id = u.adjoint().matmul(&e.matmul(&id));
    let trace_m1: C64 = (0..d).map(|k| m_id[(k * d + k, 0)]).sum();
    (trace_m + trace_m1).re / (d * (d + 1)) as f64
}

fn pure_state_density(psi: &[C64]) -> Vec<C64> {
    let d = psi.len();
    let mut v = vec![ZERO; d * d];
    for j in 0..d {
        for i in 0..d {
            v[j * d + i] = psi[i] * psi[j].conj();
        }
    }
    v
}

/// Ensemble average over uniformly random pure states of
/// `⟨ψ|U†ℰ[|ψ⟩⟨ψ|]U|ψ⟩`, with its standard error.
pub fn agf_montecarlo(channel: &QuantumChannel, n_states: usize, seed: u64) -> Result<(f64, f64)> {
    if n_states == 0 {
        return Err(Error::InvalidParameter("n_states must be at least 1".into()));
    }
    let d = channel.dim;
    let gate = build_gate(&channel.gate)?;
    let mut rng = seeded_rng(seed, 1);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_states {
        let psi = haar_random_state(d, &mut rng);
        let out = channel.superop.apply(&pure_state_density(&psi));
        let phi = gate.apply(&psi);
        let mut f = ZERO;
        for j in 0..d {
            for i in 0..d {
                f += phi[i].conj() * out[j * d + i] * phi[j];
            }
        }
        sum += f.re;
        sum_sq += f.re * f.re;
    }
    let n = n_states as f64;
    let mean = sum / n;
    let var = if n_states > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok((mean, (var / n).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics {
    pub mean_purity: f64,
    /// Mean of `(2/(d(d−1))) Σ_{i>j} |ρ_ij|`.
    pub mean_coherence: f64,
}

/// Purity and coherence of evolved random pure states.
pub fn evolve_diagnostics(channel: &QuantumChannel, n_states: usize, seed: u64) -> Result<Diagnostics> {
    if n_states == 0 {
        return Err(Error::InvalidParameter("n_states must be at least 1".into()));
    }
    let d = channel.dim;
    let mut rng = seeded_rng(seed, 2);
    let (mut purity, mut coherence) = (0.0, 0.0);
    for _ in 0..n_states {
        let psi = haar_random_state(d, &mut rng);
        let out = channel.superop.apply(&pure_state_density(&psi));
        purity += out.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let mut c = 0.0;
        for j in 0..d {
            for i in j + 1..d {
                c += out[j * d + i].norm();
            }
        }
        coherence += 2.0 * c / (d * (d - 1)) as f64;
    }
    let n = n_states as f64;
    Ok(Diagnostics { mean_purity: purity / n, mean_coherence: coherence / n })
}
