//! Gate set, collapse operators and the Liouville superoperators 𝒰, 𝒮, 𝓛.
//!
//! Basis states are labelled `0..d`; the spin operators use `j = 1..d` for
//! their diagonal/off-diagonal formulas.

use std::f64::consts::PI;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::densemath::{
    hamiltonian_log, householder_qr, kron, matrix_power_unitary, ComplexMatrix, C64, I, ONE,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GateKind {
    Identity,
    ShiftX,
    ClockZ,
    Qft,
    Phase(f64),
    TGate,
    XPower(f64),
    ZPower(f64),
    /// Haar-random unitary drawn from stream `stream` of the generator seeded by `seed`.
    HaarRandom { seed: u64, stream: u64 },
}

impl GateKind {
    /// Short lowercase label used in tables.
    pub fn label(&self) -> &'static str {
        match self {
            GateKind::Identity => "identity",
            GateKind::ShiftX => "x",
            GateKind::ClockZ => "z",
            GateKind::Qft => "qft",
            GateKind::Phase(_) => "phase",
            GateKind::TGate => "t",
            GateKind::XPower(_) => "xpow",
            GateKind::ZPower(_) => "zpow",
            GateKind::HaarRandom { .. } => "haar",
        }
    }

    /// The continuous parameter of the gate (η, φ), if any.
    pub fn parameter(&self) -> Option<f64> {
        match *self {
            GateKind::Phase(p) | GateKind::XPower(p) | GateKind::ZPower(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub kind: GateKind,
    pub dim: usize,
}

impl GateSpec {
    pub fn new(kind: GateKind, dim: usize) -> Result<Self> {
        let spec = Self { kind, dim };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidParameter(format!("gate dimension {} < 2", self.dim)));
        }
        match self.kind {
            GateKind::Phase(phi) if !phi.is_finite() => {
                Err(Error::InvalidParameter(format!("phase {phi}")))
            }
            GateKind::XPower(eta) | GateKind::ZPower(eta) if !(0.0..=1.0).contains(&eta) => {
                Err(Error::InvalidParameter(format!("exponent {eta} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for GateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GateKind::HaarRandom { seed, stream } => write!(f, "haar[{seed}:{stream}]"),
            kind => match kind.parameter() {
                Some(p) => write!(f, "{}({p})", kind.label()),
                None => f.write_str(kind.label()),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoiseKind {
    DephasingJz,
    BitFlipJx,
    RelaxationJminus,
}

impl NoiseKind {
    pub fn label(&self) -> &'static str {
        match self {
            NoiseKind::DephasingJz => "jz",
            NoiseKind::BitFlipJx => "jx",
            NoiseKind::RelaxationJminus => "jminus",
        }
    }
}

/// Collapse operator of a single-channel dissipator. The coupling enters
/// separately as the dimensionless `γt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub dim: usize,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!("noise dimension {dim} < 2")));
        }
        Ok(Self { kind, dim })
    }
}

fn omega(d: usize) -> C64 {
    C64::from_polar(1.0, 2.0 * PI / d as f64)
}

fn phase_gate(d: usize, phi: f64) -> ComplexMatrix {
    let diag: Vec<C64> = (0..d).map(|j| C64::from_polar(1.0, j as f64 * phi)).collect();
    ComplexMatrix::from_diag(&diag)
}

fn shift(d: usize) -> ComplexMatrix {
    let mut x = ComplexMatrix::zeros(d, d);
    for j in 0..d {
        x[((j + 1) % d, j)] = ONE;
    }
    x
}

fn clock(d: usize) -> ComplexMatrix {
    let w = omega(d);
    let diag: Vec<C64> = (0..d).map(|j| w.powu(j as u32)).collect();
    ComplexMatrix::from_diag(&diag)
}

fn qft(d: usize) -> ComplexMatrix {
    let mut f = ComplexMatrix::zeros(d, d);
    let norm = 1.0 / (d as f64).sqrt();
    for j in 0..d {
        for k in 0..d {
            let angle = 2.0 * PI * ((j * k) % d) as f64 / d as f64;
            f[(j, k)] = C64::from_polar(norm, angle);
        }
    }
    f
}

pub fn build_gate(spec: &GateSpec) -> Result<ComplexMatrix> {
    spec.validate()?;
    let d = spec.dim;
    Ok(match spec.kind {
        GateKind::Identity => ComplexMatrix::identity(d),
        GateKind::ShiftX => shift(d),
        GateKind::ClockZ => clock(d),
        GateKind::Qft => qft(d),
        GateKind::Phase(phi) => phase_gate(d, phi),
        GateKind::TGate => phase_gate(d, PI / 8.0),
        GateKind::XPower(eta) => matrix_power_unitary(&shift(d), eta)?,
        GateKind::ZPower(eta) => matrix_power_unitary(&clock(d), eta)?,
        GateKind::HaarRandom { seed, stream } => haar_random_unitary_stream(d, seed, stream),
    })
}

/// Generator for stream `stream` of `seed`; independent streams make parallel
/// ensembles reproducible regardless of scheduling.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar-distributed unitary from a complex Ginibre matrix: `Q·diag(r_ii/|r_ii|)`.
pub fn haar_unitary_from_rng<R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let data: Vec<C64> = (0..d * d).map(|_| complex_gaussian(rng)).collect();
    let z = ComplexMatrix::from_raw(d, d, data);
    let qr = householder_qr(&z);
    let mut q = qr.q;
    for j in 0..d {
        let r = qr.r[(j, j)];
        let phase = if r.norm() > 0.0 { r / r.norm() } else { ONE };
        for v in q.column_mut(j) {
            *v *= phase;
        }
    }
    q
}

pub fn haar_random_unitary(d: usize, seed: u64) -> ComplexMatrix {
    haar_random_unitary_stream(d, seed, 0)
}

pub fn haar_random_unitary_stream(d: usize, seed: u64, stream: u64) -> ComplexMatrix {
    haar_unitary_from_rng(d, &mut seeded_rng(seed, stream))
}

/// Uniformly random pure state: a normalised vector of i.i.d. complex Gaussians.
pub fn haar_random_state<R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<C64> {
    let mut v: Vec<C64> = (0..d).map(|_| complex_gaussian(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in v.iter_mut() {
        *z /= norm;
    }
    v
}

pub fn build_collapse(spec: &NoiseSpec) -> Result<ComplexMatrix> {
    let d = spec.dim;
    if d < 2 {
        return Err(Error::InvalidParameter(format!("noise dimension {d} < 2")));
    }
    let ladder = |j: usize| ((j * (d - j)) as f64).sqrt();
    let mut l = ComplexMatrix::zeros(d, d);
    match spec.kind {
        NoiseKind::DephasingJz => {
            for j in 1..=d {
                l[(j - 1, j - 1)] = C64::new((d as f64 + 1.0 - 2.0 * j as f64) / 2.0, 0.0);
            }
        }
        NoiseKind::BitFlipJx => {
            for j in 1..d {
                let v = C64::new(ladder(j) / 2.0, 0.0);
                l[(j - 1, j)] = v;
                l[(j, j - 1)] = v;
            }
        }
        NoiseKind::RelaxationJminus => {
            for j in 1..d {
                l[(j, j - 1)] = C64::new(ladder(j), 0.0);
            }
        }
    }
    Ok(l)
}

/// Control Hamiltonian `H_c = i log U` for unit gate time; its spectrum lies
/// in `(−π, π]`.
pub fn control_hamiltonian(u: &ComplexMatrix) -> Result<ComplexMatrix> {
    hamiltonian_log(u)
}

fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    (&u.adjoint().matmul(u) - &ComplexMatrix::identity(u.rows())).frobenius_norm()
}

/// `𝒰 = U* ⊗ U`, so that `𝒰 vec(ρ) = vec(UρU†)`.
pub fn super_unitary(u: &ComplexMatrix) -> Result<ComplexMatrix> {
    u.require_square("gate")?;
    let defect = unitarity_defect(u);
    if defect > 1e-10 * (u.rows() as f64).sqrt() {
        return Err(Error::NotUnitary(defect));
    }
    Ok(kron(&u.conj(), u))
}

/// `𝒮 = −i(1 ⊗ H − Hᵀ ⊗ 1)`, so that `𝒮 vec(ρ) = vec(−i[H, ρ])`.
pub fn super_hamiltonian(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    let d = h.require_square("Hamiltonian")?;
    let defect = (h - &h.adjoint()).frobenius_norm();
    if defect > 1e-10 * h.frobenius_norm().max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    let id = ComplexMatrix::identity(d);
    Ok((&kron(&id, h) - &kron(&h.transpose(), &id)).scale(-I))
}

/// `𝓛 = L* ⊗ L − ½(1 ⊗ L†L) − ½((L†L)ᵀ ⊗ 1)`, so that
/// `𝓛 vec(ρ) = vec(LρL† − ½{L†L, ρ})`.
pub fn super_lindblad(l: &ComplexMatrix) -> Result<ComplexMatrix> {
    let d = l.require_square("collapse operator")?;
    let id = ComplexMatrix::identity(d);
    let ll = l.adjoint().matmul(l);
    let mut out = kron(&l.conj(), l);
    out -= &kron(&id, &ll).scale_real(0.5);
    out -= &kron(&ll.transpose(), &id).scale_real(0.5);
    Ok(out)
}
