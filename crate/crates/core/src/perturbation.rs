//! Perturbative expansion of the AGI in the coupling `γt`.
//!
//! The m-th order term is `𝓘^(m) = −(γt)^m Tr M^(m)(t) / (d(d+1))` with
//!
//! ```text
//! M^(m)(t) = Σ_{n₁..n_m} Π_i (−t)^{n_i} [(𝒮)^{n_i}, 𝓛] / (n_i! Σ_{j≥i}(n_j+1))
//! ```
//!
//! (product ordered with `i = 1` leftmost). Each index is truncated at a cutoff
//! `N`; the truncation error is bounded a posteriori.

use serde::Serialize;

use crate::channel::Generator;
use crate::densemath::{expm, hermitian_eigen, ComplexMatrix, C64, I, ONE, ZERO};
use crate::error::{Error, Result};
use crate::qudit::{build_collapse, super_lindblad, GateSpec, NoiseSpec};

pub const DEFAULT_CUTOFF_N: usize = 40;
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_EPSILON: f64 = 1e-8;
/// Hard cap on the inner index `s` of the second-order sum.
pub const MAX_S: usize = 200;
/// Largest dimension for which commutator traces are formed explicitly.
const DIRECT_ROUTE_MAX_DIM: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cutoffs {
    /// Cap on every nested index `n_i`.
    pub n: usize,
    /// Allowed truncation error relative to `‖𝓛‖^m / m!`.
    pub tail_tolerance: f64,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Self { n: DEFAULT_CUTOFF_N, tail_tolerance: DEFAULT_TAIL_TOLERANCE }
    }
}

impl Cutoffs {
    /// Smallest cutoff, no lower than [`DEFAULT_CUTOFF_N`], whose tail bound
    /// meets `tail_tolerance` for every order up to `m_max`.
    pub fn adaptive(g: &Generator, t: f64, m_max: usize, tail_tolerance: f64) -> Result<Self> {
        let x = t.abs() * adjoint_radius(&g.hamiltonian)?;
        let m = m_max.max(1) as f64;
        for n in DEFAULT_CUTOFF_N..=1000 {
            let delta = exp_tail(x, n);
            if m * delta * (1.0 + delta).powf(m - 1.0) <= tail_tolerance {
                return Ok(Self { n, tail_tolerance });
            }
        }
        Err(Error::Truncation { tail: exp_tail(x, 1000), tolerance: tail_tolerance })
    }
}

/// `[(X)ⁿ, Y]` by the recursion `[(X)ⁿ, Y] = [X, [(X)ⁿ⁻¹, Y]]`.
pub fn iterated_commutator(x: &ComplexMatrix, y: &ComplexMatrix, n: usize) -> Result<ComplexMatrix> {
    check_pair(x, y)?;
    let mut c = y.clone();
    for _ in 0..n {
        c = x.commutator(&c);
    }
    Ok(c)
}

/// `[(X)ⁿ, Y] = Σ_k (−1)^k C(n,k) X^{n−k} Y X^k`.
pub fn iterated_commutator_binomial(
    x: &ComplexMatrix,
    y: &ComplexMatrix,
    n: usize,
) -> Result<ComplexMatrix> {
    check_pair(x, y)?;
    let powers: Vec<ComplexMatrix> = std::iter::successors(Some(ComplexMatrix::identity(x.rows())), |p| {
        Some(p.matmul(x))
    })
    .take(n + 1)
    .collect();
    let mut out = ComplexMatrix::zeros(x.rows(), x.cols());
    for k in 0..=n {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let term = powers[n - k].matmul(y).matmul(&powers[k]);
        out += &term.scale_real(sign * binomial(n, k));
    }
    Ok(out)
}

fn check_pair(x: &ComplexMatrix, y: &ComplexMatrix) -> Result<()> {
    x.require_square("commutator operand")?;
    if x.rows() != y.rows() || x.cols() != y.cols() {
        return Err(Error::Dimension(format!(
            "commutator of {}x{} with {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    Ok(())
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Spectral radius of `ad_𝒮`: `2(λ_max − λ_min)` of the control Hamiltonian.
fn adjoint_radius(h: &ComplexMatrix) -> Result<f64> {
    let ev = hermitian_eigen(h)?.eigenvalues;
    Ok(2.0 * (ev[ev.len() - 1] - ev[0]))
}

/// `Σ_{n>N} xⁿ/n!`.
fn exp_tail(x: f64, n_cut: usize) -> f64 {
    let mut term = 1.0;
    for n in 1..=n_cut {
        term *= x / n as f64;
    }
    let mut tail = 0.0;
    let mut n = n_cut + 1;
    loop {
        term *= x / n as f64;
        tail += term;
        if term < 1e-18 * tail.max(f64::MIN_POSITIVE) || n > n_cut + 2000 {
            return tail;
        }
        n += 1;
    }
}

/// One truncated nested-sum term with its error bound.
#[derive(Clone, Debug)]
pub struct MOrderTerm {
    pub matrix: ComplexMatrix,
    /// Bound on `‖M^(m) − M^(m)_N‖₂ / (‖𝓛‖₂^m / m!)`.
    pub relative_tail: f64,
}

/// Nested-sum coefficients for a fixed generator and gate time, reusable
/// across orders.
struct NestedSum {
    /// `Aₙ = (−t)ⁿ [(𝒮)ⁿ, 𝓛] / n!`
    weighted: Vec<ComplexMatrix>,
    delta: f64,
}

impl NestedSum {
    fn new(g: &Generator, t: f64, n_cut: usize) -> Result<Self> {
        let x = t.abs() * adjoint_radius(&g.hamiltonian)?;
        let mut weighted = Vec::with_capacity(n_cut + 1);
        let mut c = g.l.clone();
        let mut coeff = 1.0;
        for n in 0..=n_cut {
            if n > 0 {
                c = g.s.commutator(&c);
                coeff *= -t / n as f64;
            }
            weighted.push(c.scale_real(coeff));
        }
        Ok(Self { weighted, delta: exp_tail(x, n_cut) })
    }

    fn order(&self, m: usize) -> MOrderTerm {
        let n_cut = self.weighted.len() - 1;
        let dim = self.weighted[0].rows();
        let kmax = m * (n_cut + 1);
        // r[k]: suffix product with Σ_{j≥i}(n_j+1) = k
        let mut r: Vec<Option<ComplexMatrix>> = vec![None; kmax + 1];
        r[0] = Some(ComplexMatrix::identity(dim));
        for level in 1..=m {
            let reach = level * (n_cut + 1);
            let mut next: Vec<Option<ComplexMatrix>> = vec![None; kmax + 1];
            for (k, slot) in next.iter_mut().enumerate().take(reach + 1).skip(1) {
                let mut acc: Option<ComplexMatrix> = None;
                for n in 0..=n_cut.min(k - 1) {
                    if let Some(tail) = &r[k - n - 1] {
                        let prod = self.weighted[n].matmul(tail);
                        match acc.as_mut() {
                            Some(a) => *a += &prod,
                            None => acc = Some(prod),
                        }
                    }
                }
                *slot = acc.map(|a| a.scale_real(1.0 / k as f64));
            }
            r = next;
        }
        let mut matrix = ComplexMatrix::zeros(dim, dim);
        for block in r.iter().flatten() {
            matrix += block;
        }
        let d = self.delta;
        MOrderTerm { matrix, relative_tail: m as f64 * d * (1.0 + d).powi(m as i32 - 1) }
    }
}

fn check_tail(term: &MOrderTerm, cutoffs: &Cutoffs) -> Result<()> {
    if term.relative_tail > cutoffs.tail_tolerance {
        return Err(Error::Truncation {
            tail: term.relative_tail,
            tolerance: cutoffs.tail_tolerance,
        });
    }
    Ok(())
}

/// `M^(m)(t)` with every index capped at `cutoff_n`.
pub fn m_order_superop(
    gate: &GateSpec,
    noise: &NoiseSpec,
    t: f64,
    m: usize,
    cutoff_n: usize,
) -> Result<ComplexMatrix> {
    if m == 0 {
        return Err(Error::InvalidParameter("order m must be at least 1".into()));
    }
    let g = Generator::new(gate, noise)?;
    let cutoffs = Cutoffs { n: cutoff_n, ..Cutoffs::default() };
    let term = NestedSum::new(&g, t, cutoff_n)?.order(m);
    check_tail(&term, &cutoffs)?;
    Ok(term.matrix)
}

/// `M^(m)(t)` for a prepared generator, returned with its tail bound and not
/// checked against a tolerance.
pub fn m_order_term(g: &Generator, t: f64, m: usize, cutoff_n: usize) -> Result<MOrderTerm> {
    Ok(NestedSum::new(g, t, cutoff_n)?.order(m))
}

/// Per-order AGI corrections at one coupling.
#[derive(Clone, Debug, Serialize)]
pub struct PerturbationSeries {
    pub order: usize,
    /// `𝓘^(1), …, 𝓘^(m_max)`
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub gamma_t: f64,
    pub t: f64,
    pub cutoffs: Cutoffs,
    pub relative_tails: Vec<f64>,
    pub converged: Vec<bool>,
}

/// `γt`-independent traces `Tr M^(m)(t)`; evaluating a series from them at
/// many couplings costs nothing extra.
#[derive(Clone, Debug)]
pub struct SeriesCoefficients {
    pub dim: usize,
    pub t: f64,
    pub cutoffs: Cutoffs,
    pub traces: Vec<f64>,
    pub relative_tails: Vec<f64>,
}

impl SeriesCoefficients {
    pub fn new(g: &Generator, t: f64, m_max: usize, cutoffs: Cutoffs) -> Result<Self> {
        if m_max == 0 {
            return Err(Error::InvalidParameter("m_max must be at least 1".into()));
        }
        let nested = NestedSum::new(g, t, cutoffs.n)?;
        let mut traces = Vec::with_capacity(m_max);
        let mut relative_tails = Vec::with_capacity(m_max);
        for m in 1..=m_max {
            let term = nested.order(m);
            check_tail(&term, &cutoffs)?;
            traces.push(term.matrix.trace().re);
            relative_tails.push(term.relative_tail);
        }
        Ok(Self { dim: g.dim(), t, cutoffs, traces, relative_tails })
    }

    pub fn series(&self, gamma_t: f64) -> PerturbationSeries {
        let norm = (self.dim * (self.dim + 1)) as f64;
        let terms: Vec<f64> = self
            .traces
            .iter()
            .enumerate()
            .map(|(i, tr)| -gamma_t.powi(i as i32 + 1) * tr / norm)
            .collect();
        let partial_sums = terms
            .iter()
            .scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            })
            .collect();
        PerturbationSeries {
            order: terms.len(),
            terms,
            partial_sums,
            gamma_t,
            t: self.t,
            cutoffs: self.cutoffs,
            relative_tails: self.relative_tails.clone(),
            converged: self
                .relative_tails
                .iter()
                .map(|&r| r <= self.cutoffs.tail_tolerance)
                .collect(),
        }
    }
}

/// `𝓘^(1) … 𝓘^(m_max)` at coupling `gamma_t` with unit gate time.
pub fn agi_series(
    gate: &GateSpec,
    noise: &NoiseSpec,
    gamma_t: f64,
    m_max: usize,
    cutoffs: Cutoffs,
) -> Result<PerturbationSeries> {
    let g = Generator::new(gate, noise)?;
    Ok(SeriesCoefficients::new(&g, 1.0, m_max, cutoffs)?.series(gamma_t))
}

/// `𝓘^(1) = −γt (|Tr L|² − d Tr L†L) / (d(d+1))`, gate independent.
pub fn agi_first_order(noise: &NoiseSpec, gamma_t: f64, d: usize) -> Result<f64> {
    if noise.dim != d {
        return Err(Error::Dimension(format!("noise dimension {} ≠ {d}", noise.dim)));
    }
    let l = build_collapse(noise)?;
    let tr_l = l.trace().norm_sqr();
    let tr_ll = l.adjoint().matmul(&l).trace().re;
    Ok(-gamma_t * (tr_l - d as f64 * tr_ll) / (d * (d + 1)) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TraceRoute {
    /// Explicit `d²×d²` commutator recursion for `d ≤ 8`, eigenbasis otherwise.
    Auto,
    Commutator,
    /// Diagonal `ad_𝒮` in the eigenbasis of the control Hamiltonian.
    Eigenbasis,
}

/// Successive traces `Tr{𝓛[(𝒮)^s, 𝓛]}`, `s = 0, 1, 2, …`.
pub struct CommutatorTraces {
    state: TraceState,
    next_s: usize,
}

enum TraceState {
    Commutator { s: ComplexMatrix, l: ComplexMatrix, current: ComplexMatrix },
    Eigenbasis { weights: Vec<C64>, deltas: Vec<C64>, powers: Vec<C64> },
}

impl CommutatorTraces {
    pub fn new(g: &Generator, route: TraceRoute) -> Result<Self> {
        let use_direct = match route {
            TraceRoute::Auto => g.dim() <= DIRECT_ROUTE_MAX_DIM,
            TraceRoute::Commutator => true,
            TraceRoute::Eigenbasis => false,
        };
        let state = if use_direct {
            TraceState::Commutator { s: g.s.clone(), l: g.l.clone(), current: g.l.clone() }
        } else {
            let eig = hermitian_eigen(&g.hamiltonian)?;
            let v = &eig.eigenvectors;
            let lt = v.adjoint().matmul(&g.collapse).matmul(v);
            let lsup = super_lindblad(&lt)?;
            let d = g.dim();
            let n = d * d;
            let sigma: Vec<C64> = (0..n)
                .map(|p| {
                    let (a, b) = (p / d, p % d);
                    -I * (eig.eigenvalues[b] - eig.eigenvalues[a])
                })
                .collect();
            let mut weights = Vec::with_capacity(n * n);
            let mut deltas = Vec::with_capacity(n * n);
            for q in 0..n {
                for p in 0..n {
                    let w = lsup[(q, p)] * lsup[(p, q)];
                    if w != ZERO {
                        weights.push(w);
                        deltas.push(sigma[p] - sigma[q]);
                    }
                }
            }
            let powers = vec![ONE; weights.len()];
            TraceState::Eigenbasis { weights, deltas, powers }
        };
        Ok(Self { state, next_s: 0 })
    }

    /// Index `s` of the trace returned by the next call to [`Self::next_trace`].
    pub fn next_index(&self) -> usize {
        self.next_s
    }

    pub fn next_trace(&mut self) -> C64 {
        let value = match &mut self.state {
            TraceState::Commutator { s, l, current } => {
                if self.next_s > 0 {
                    *current = s.commutator(current);
                }
                l.trace_product(current)
            }
            TraceState::Eigenbasis { weights, deltas, powers } => {
                if self.next_s > 0 {
                    for (p, d) in powers.iter_mut().zip(deltas.iter()) {
                        *p *= d;
                    }
                }
                weights.iter().zip(powers.iter()).map(|(w, p)| w * p).sum()
            }
        };
        self.next_s += 1;
        value
    }
}

/// Outcome of the successive-term test on the second-order inner sum.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    /// Smallest even `s` with `|f(s) − f(s−2)| < ε`.
    pub s_epsilon: usize,
    pub epsilon: f64,
    /// `(s, f(s))` for `s = 2, 4, …, s_ε`, where
    /// `f(s) = Tr{𝓛[(𝒮)^s,𝓛]} (−t)^s / (s+2)!`.
    pub term_values: Vec<(usize, f64)>,
    pub gate: GateSpec,
    pub t: f64,
    /// `Tr 𝓛²`
    pub trace_l2: f64,
}

/// Sums the even-s series until successive terms differ by less than
/// `epsilon`; the s = 0 term is `Tr𝓛²/2` and enters the test as `f(0) = 0`.
pub fn convergence_cutoff_with(
    g: &Generator,
    t: f64,
    epsilon: f64,
    route: TraceRoute,
) -> Result<ConvergenceReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon}")));
    }
    let mut traces = CommutatorTraces::new(g, route)?;
    let trace_l2 = traces.next_trace().re;
    let mut previous = 0.0;
    let mut term_values = Vec::new();
    // running (−t)^s/(s+2)! for even s
    let mut weight = 0.5;
    let mut s = 0;
    while s + 2 <= MAX_S {
        traces.next_trace();
        let tr = traces.next_trace().re;
        s += 2;
        weight *= t * t / ((s + 1) * (s + 2)) as f64;
        let f = tr * weight;
        term_values.push((s, f));
        if (f - previous).abs() < epsilon {
            return Ok(ConvergenceReport {
                s_epsilon: s,
                epsilon,
                term_values,
                gate: g.gate,
                t,
                trace_l2,
            });
        }
        previous = f;
    }
    Err(Error::NoConvergence(format!(
        "second-order sum not converged to {epsilon:e} within s = {MAX_S}"
    )))
}

pub fn convergence_cutoff(
    gate: &GateSpec,
    noise: &NoiseSpec,
    t: f64,
    epsilon: f64,
) -> Result<ConvergenceReport> {
    let g = Generator::new(gate, noise)?;
    convergence_cutoff_with(&g, t, epsilon, TraceRoute::Auto)
}

/// `𝓘^(2) = −(γt)²/(d(d+1)) (Tr𝓛²/2 + Σ_{s even ≥ 2} f(s))` from a report.
pub fn second_order_value(report: &ConvergenceReport, gamma_t: f64) -> f64 {
    let d = report.gate.dim;
    let inner = report.trace_l2 / 2.0 + report.term_values.iter().map(|(_, f)| f).sum::<f64>();
    -gamma_t * gamma_t * inner / (d * (d + 1)) as f64
}

pub fn agi_second_order(
    gate: &GateSpec,
    noise: &NoiseSpec,
    gamma_t: f64,
    t: f64,
    epsilon: f64,
) -> Result<(f64, ConvergenceReport)> {
    let report = convergence_cutoff(gate, noise, t, epsilon)?;
    Ok((second_order_value(&report, gamma_t), report))
}

/// `Tr{𝓛[(𝒮)^s,𝓛]}` for `s = 0..=s_max` from traces of words in `H`, `L`,
/// `L†` and `L†L` only, never forming a superoperator.
pub fn operator_form_traces(hamiltonian: &ComplexMatrix, collapse: &ComplexMatrix, s_max: usize) -> Vec<f64> {
    let d = hamiltonian.rows();
    let l = collapse;
    let ld = l.adjoint();
    let a = ld.matmul(l);
    let h_powers: Vec<ComplexMatrix> =
        std::iter::successors(Some(ComplexMatrix::identity(d)), |p| Some(p.matmul(hamiltonian)))
            .take(s_max + 1)
            .collect();
    let tr_h: Vec<C64> = h_powers.iter().map(|p| p.trace()).collect();

    // Operators X ∈ {L, L†, A}; table[x][y][a][b] = Tr(X H^a Y H^b).
    let ops = [l.clone(), ld, a];
    let xh: Vec<Vec<ComplexMatrix>> =
        ops.iter().map(|x| h_powers.iter().map(|p| x.matmul(p)).collect()).collect();
    let single: Vec<Vec<C64>> = xh.iter().map(|row| row.iter().map(|m| m.trace()).collect()).collect();
    let n = s_max + 1;
    let mut table = vec![vec![vec![ZERO; n * n]; 3]; 3];
    for x in 0..3 {
        for y in 0..3 {
            for p in 0..n {
                for q in 0..n {
                    table[x][y][p * n + q] = xh[x][p].trace_product(&xh[y][q]);
                }
            }
        }
    }
    // Operand of a Kronecker factor: an index into `ops`, or the identity.
    #[derive(Clone, Copy)]
    enum Op {
        Id,
        X(usize),
    }
    let word = |x: Op, p: usize, y: Op, q: usize| -> C64 {
        match (x, y) {
            (Op::Id, Op::Id) => tr_h[p + q],
            (Op::Id, Op::X(j)) | (Op::X(j), Op::Id) => single[j][p + q],
            (Op::X(i), Op::X(j)) => table[i][j][p * n + q],
        }
    };
    // 𝓛 = Σ c (Pᵀ ⊗ Q) with (c, P, Q) ∈ {(1, L†, L), (−½, 1, A), (−½, A, 1)};
    // Tr[(P₁ᵀ⊗Q₁)((H^j)ᵀ⊗H^{a−j})(P₂ᵀ⊗Q₂)((H^l)ᵀ⊗H^{b−l})]
    //   = Tr(P₁ H^l P₂ H^j) · Tr(Q₁ H^{a−j} Q₂ H^{b−l}).
    let terms = [(1.0, Op::X(1), Op::X(0)), (-0.5, Op::Id, Op::X(2)), (-0.5, Op::X(2), Op::Id)];

    let mut out = Vec::with_capacity(n);
    for s in 0..=s_max {
        // [(K)^s, 𝓛] with 𝒮 = −iK, K = 1⊗H − Hᵀ⊗1
        let mut acc = ZERO;
        for k in 0..=s {
            let a_pow = s - k;
            let b_pow = k;
            let outer = binomial(s, k) * if k % 2 == 0 { 1.0 } else { -1.0 };
            for j in 0..=a_pow {
                let cj = binomial(a_pow, j) * if j % 2 == 0 { 1.0 } else { -1.0 };
                for l_idx in 0..=b_pow {
                    let cl = binomial(b_pow, l_idx) * if l_idx % 2 == 0 { 1.0 } else { -1.0 };
                    let mut inner = ZERO;
                    for &(c1, p1, q1) in &terms {
                        for &(c2, p2, q2) in &terms {
                            let first = word(p1, l_idx, p2, j);
                            let second = word(q1, a_pow - j, q2, b_pow - l_idx);
                            inner += first * second * (c1 * c2);
                        }
                    }
                    acc += inner * (outer * cj * cl);
                }
            }
        }
        let phase = (-I).powu(s as u32);
        out.push((acc * phase).re);
    }
    out
}

/// Second-order correction from [`operator_form_traces`], summed over even
/// `s ≤ s_max`.
pub fn agi_second_order_operator_form(
    gate: &GateSpec,
    noise: &NoiseSpec,
    gamma_t: f64,
    t: f64,
    s_max: usize,
) -> Result<f64> {
    if !s_max.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("s_max = {s_max} must be even")));
    }
    let g = Generator::new(gate, noise)?;
    let traces = operator_form_traces(&g.hamiltonian, &g.collapse, s_max);
    let mut inner = traces[0] / 2.0;
    let mut weight = 0.5;
    for s in (2..=s_max).step_by(2) {
        weight *= t * t / ((s + 1) * (s + 2)) as f64;
        inner += traces[s] * weight;
    }
    let d = g.dim();
    Ok(-gamma_t * gamma_t * inner / (d * (d + 1)) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LindbladTraceRoute {
    Superop,
    /// Multinomial expansion, valid for real symmetric `L`.
    Multinomial,
}

/// `Tr{𝓛^m}`.
pub fn trace_lindblad_power(noise: &NoiseSpec, m: usize, route: LindbladTraceRoute) -> Result<f64> {
    let l = build_collapse(noise)?;
    match route {
        LindbladTraceRoute::Superop => {
            let sl = super_lindblad(&l)?;
            Ok(sl.powi(m).trace().re)
        }
        LindbladTraceRoute::Multinomial => {
            let is_real_symmetric = (&l - &l.transpose()).max_abs() < 1e-14
                && l.as_slice().iter().all(|z| z.im == 0.0);
            if !is_real_symmetric {
                return Err(Error::InvalidParameter(
                    "multinomial route requires a real symmetric collapse operator".into(),
                ));
            }
            let d = l.rows();
            let powers: Vec<f64> = std::iter::successors(Some(ComplexMatrix::identity(d)), |p| Some(p.matmul(&l)))
                .take(2 * m + 1)
                .map(|p| p.trace().re)
                .collect();
            let mut total = 0.0;
            for k1 in 0..=m {
                for k2 in 0..=m - k1 {
                    let k3 = m - k1 - k2;
                    let coeff = factorial(m)
                        / (factorial(k1) * factorial(k2) * factorial(k3))
                        / (-2.0f64).powi((k2 + k3) as i32);
                    total += coeff * powers[k1 + 2 * k2] * powers[2 * m - k1 - 2 * k2];
                }
            }
            Ok(total)
        }
    }
}

/// Resummed gate-independent AGI `Tr{1 − e^{γt𝓛}} / (d(d+1))`.
pub fn gate_independent_agi(noise: &NoiseSpec, gamma_t: f64, d: usize) -> Result<f64> {
    if noise.dim != d {
        return Err(Error::Dimension(format!("noise dimension {} ≠ {d}", noise.dim)));
    }
    let l = super_lindblad(&build_collapse(noise)?)?;
    let e = expm(&l.scale_real(gamma_t))?;
    Ok(((d * d) as f64 - e.trace().re) / (d * (d + 1)) as f64)
}

/// `Tr{𝓛²}` in operator form:
/// `|Tr L²|² + ½(Tr L†L)² + (d/2) Tr(L†L)² − 2 Re(conj(Tr L) Tr(L L†L))`.
pub fn trace_lindblad_squared_operator(l: &ComplexMatrix) -> f64 {
    let d = l.rows() as f64;
    let a = l.adjoint().matmul(l);
    let tr_l2 = l.matmul(l).trace();
    let tr_a = a.trace().re;
    let tr_a2 = a.trace_product(&a).re;
    let cross = (l.trace().conj() * l.trace_product(&a)).re;
    tr_l2.norm_sqr() + 0.5 * tr_a * tr_a + 0.5 * d * tr_a2 - 2.0 * cross
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::agf_exact;
    use crate::qudit::{seeded_rng, GateKind, NoiseKind};
    use proptest::prelude::*;
    use rand::Rng;

    fn gate(kind: GateKind, d: usize) -> GateSpec {
        GateSpec::new(kind, d).unwrap()
    }

    fn noise(kind: NoiseKind, d: usize) -> NoiseSpec {
        NoiseSpec::new(kind, d).unwrap()
    }

    fn random_matrix(n: usize, seed: u64) -> ComplexMatrix {
        let mut rng = seeded_rng(seed, 5);
        let data = (0..n * n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        ComplexMatrix::new(n, n, data).unwrap()
    }

    #[test]
    fn commutator_basics() {
        let x = random_matrix(4, 1);
        let y = random_matrix(4, 2);
        assert_eq!(iterated_commutator(&x, &y, 0).unwrap(), y);
        assert_eq!(iterated_commutator(&x, &x, 1).unwrap().frobenius_norm(), 0.0);
        for n in 0..=6 {
            let a = iterated_commutator(&x, &y, n).unwrap();
            let b = iterated_commutator_binomial(&x, &y, n).unwrap();
            assert!((&a - &b).frobenius_norm() < 1e-10 * a.frobenius_norm().max(1.0), "n = {n}");
        }
        assert!(iterated_commutator(&x, &ComplexMatrix::zeros(3, 3), 1).is_err());
    }

    #[test]
    fn identity_gate_gives_lindblad_powers() {
        let g = gate(GateKind::Identity, 3);
        let nz = noise(NoiseKind::BitFlipJx, 3);
        let l = super_lindblad(&build_collapse(&nz).unwrap()).unwrap();
        for m in 1..=4 {
            let got = m_order_superop(&g, &nz, 1.0, m, 10).unwrap();
            let want = l.powi(m).scale_real(1.0 / factorial(m));
            assert!(got.relative_distance(&want) < 1e-13, "m = {m}");
        }
        assert!(m_order_superop(&g, &nz, 1.0, 0, 10).is_err());
    }

    #[test]
    fn first_order_matches_quadrature() {
        let g = Generator::new(&gate(GateKind::Qft, 3), &noise(NoiseKind::RelaxationJminus, 3)).unwrap();
        for t in [1.0, 0.6] {
            let got = m_order_term(&g, t, 1, 60).unwrap().matrix;
            // composite Simpson on (1/t)∫₀ᵗ e^{−𝒮τ} 𝓛 e^{𝒮τ} dτ
            let steps = 800;
            let h = t / steps as f64;
            let step = expm(&g.s.scale_real(h)).unwrap();
            let step_inv = expm(&g.s.scale_real(-h)).unwrap();
            let mut left = ComplexMatrix::identity(9);
            let mut right = ComplexMatrix::identity(9);
            let mut acc = ComplexMatrix::zeros(9, 9);
            for i in 0..=steps {
                let w = if i == 0 || i == steps { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += &left.matmul(&g.l).matmul(&right).scale_real(w);
                left = left.matmul(&step_inv);
                right = right.matmul(&step);
            }
            let want = acc.scale_real(h / 3.0 / t);
            assert!((&got - &want).frobenius_norm() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn nested_sum_matches_block_exponential() {
        // exp([[S, L, 0..], [0, S, L, ..], …]) has 𝒰·M^(m) t^m in its top-right block
        let g = Generator::new(&gate(GateKind::ShiftX, 3), &noise(NoiseKind::DephasingJz, 3)).unwrap();
        let n = 9;
        for m in 1..=3 {
            let size = n * (m + 1);
            let mut big = ComplexMatrix::zeros(size, size);
            for b in 0..=m {
                for i in 0..n {
                    for j in 0..n {
                        big[(b * n + i, b * n + j)] = g.s[(i, j)];
                        if b < m {
                            big[(b * n + i, (b + 1) * n + j)] = g.l[(i, j)];
                        }
                    }
                }
            }
            let e = expm(&big).unwrap();
            let mut block = ComplexMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    block[(i, j)] = e[(i, m * n + j)];
                }
            }
            let want = g.u.matmul(&m_order_term(&g, 1.0, m, 40).unwrap().matrix);
            assert!((&block - &want).frobenius_norm() < 1e-10 * want.frobenius_norm().max(1.0), "m = {m}");
        }
    }

    #[test]
    fn adaptive_cutoff() {
        let g = Generator::new(&gate(GateKind::HaarRandom { seed: 3, stream: 0 }, 4), &noise(NoiseKind::DephasingJz, 4))
            .unwrap();
        let c = Cutoffs::adaptive(&g, 1.0, 4, 1e-12).unwrap();
        assert!(c.n >= DEFAULT_CUTOFF_N);
        assert!(m_order_term(&g, 1.0, 4, c.n).unwrap().relative_tail <= 1e-12);
        let id = Generator::new(&gate(GateKind::Identity, 2), &noise(NoiseKind::DephasingJz, 2)).unwrap();
        assert_eq!(Cutoffs::adaptive(&id, 1.0, 4, 1e-12).unwrap().n, DEFAULT_CUTOFF_N);
    }

    #[test]
    fn truncation_is_reported() {
        let err = m_order_superop(&gate(GateKind::Qft, 4), &noise(NoiseKind::DephasingJz, 4), 1.0, 2, 5);
        assert!(matches!(err, Err(Error::Truncation { .. })));
    }

    #[test]
    fn first_order_examples() {
        let jz = |d| noise(NoiseKind::DephasingJz, d);
        assert!((agi_first_order(&jz(2), 1.0, 2).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((agi_first_order(&jz(16), 1e-3, 16).unwrap() - 0.02).abs() < 1e-15);
        let series = agi_series(&gate(GateKind::Qft, 4), &jz(4), 0.01, 1, Cutoffs::default()).unwrap();
        assert!((series.terms[0] - 0.01).abs() < 1e-14);
        for kind in [NoiseKind::DephasingJz, NoiseKind::BitFlipJx, NoiseKind::RelaxationJminus] {
            for d in 2..=6 {
                let nz = noise(kind, d);
                let sl = super_lindblad(&build_collapse(&nz).unwrap()).unwrap();
                let want = -0.3 * sl.trace().re / (d * (d + 1)) as f64;
                assert!((agi_first_order(&nz, 0.3, d).unwrap() - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_series_closed_form() {
        let s = agi_series(&gate(GateKind::Identity, 2), &noise(NoiseKind::DephasingJz, 2), 0.1, 2, Cutoffs::default())
            .unwrap();
        let want = 0.1 / 6.0 - 0.01 / 24.0;
        assert!((s.partial_sums[1] - want).abs() < 1e-15);
        assert!((s.partial_sums[1] - 0.01625).abs() < 1e-15);
    }

    #[test]
    fn second_order_identity() {
        let (value, report) = agi_second_order(
            &gate(GateKind::Identity, 2),
            &noise(NoiseKind::DephasingJz, 2),
            0.1,
            1.0,
            DEFAULT_EPSILON,
        )
        .unwrap();
        assert_eq!(report.s_epsilon, 2);
        assert!((value + 0.01 * 0.5 / 12.0).abs() < 1e-15);
        assert!((value + 4.1667e-4).abs() < 1e-8);
    }

    #[test]
    fn second_order_matches_nested_sum() {
        for kind in [GateKind::Qft, GateKind::ShiftX, GateKind::HaarRandom { seed: 5, stream: 1 }] {
            for d in [2, 3] {
                let g = Generator::new(&gate(kind, d), &noise(NoiseKind::BitFlipJx, d)).unwrap();
                let report = convergence_cutoff_with(&g, 1.0, 1e-14, TraceRoute::Auto).unwrap();
                let from_report = second_order_value(&report, 0.2);
                let series = SeriesCoefficients::new(&g, 1.0, 2, Cutoffs { n: 60, tail_tolerance: 1e-6 })
                    .unwrap()
                    .series(0.2);
                assert!((from_report - series.terms[1]).abs() < 1e-12, "{kind:?} d={d}");
            }
        }
    }

    #[test]
    fn trace_routes_agree() {
        for kind in [NoiseKind::DephasingJz, NoiseKind::BitFlipJx, NoiseKind::RelaxationJminus] {
            for d in [2, 3, 5] {
                let g = Generator::new(&gate(GateKind::HaarRandom { seed: 8, stream: d as u64 }, d), &noise(kind, d))
                    .unwrap();
                let mut direct = CommutatorTraces::new(&g, TraceRoute::Commutator).unwrap();
                let mut eig = CommutatorTraces::new(&g, TraceRoute::Eigenbasis).unwrap();
                let op = operator_form_traces(&g.hamiltonian, &g.collapse, 8);
                let rho = adjoint_radius(&g.hamiltonian).unwrap();
                for (s, &o) in op.iter().enumerate().take(9) {
                    let a = direct.next_trace();
                    let b = eig.next_trace();
                    let scale = g.l.frobenius_norm().powi(2) * rho.powi(s as i32).max(1.0);
                    assert!((a - b).norm() < 1e-9 * scale, "{kind:?} d={d} s={s}");
                    if s % 2 == 0 {
                        assert!((a.re - o).abs() < 1e-9 * scale, "{kind:?} d={d} s={s}");
                    }
                }
            }
        }
    }

    #[test]
    fn operator_form_identity_gate() {
        let nz = noise(NoiseKind::BitFlipJx, 4);
        let l = build_collapse(&nz).unwrap();
        let traces = operator_form_traces(&ComplexMatrix::zeros(4, 4), &l, 8);
        for s in (2..=8).step_by(2) {
            assert!(traces[s].abs() < 1e-12);
        }
        assert!(agi_second_order_operator_form(&gate(GateKind::Identity, 4), &nz, 0.1, 1.0, 3).is_err());
    }

    #[test]
    fn lindblad_power_traces() {
        use LindbladTraceRoute::*;
        let jz = |d| noise(NoiseKind::DephasingJz, d);
        for route in [Superop, Multinomial] {
            assert!((trace_lindblad_power(&jz(2), 2, route).unwrap() - 0.5).abs() < 1e-12);
            assert!((trace_lindblad_power(&jz(4), 2, route).unwrap() - 58.0).abs() < 1e-10);
            for d in 2..=7 {
                let want = -((d * d * (d * d - 1)) as f64) / 12.0;
                assert!((trace_lindblad_power(&jz(d), 1, route).unwrap() - want).abs() < 1e-10);
            }
        }
        assert!(trace_lindblad_power(&noise(NoiseKind::RelaxationJminus, 3), 2, Multinomial).is_err());
        for d in 2..=8 {
            for kind in [NoiseKind::DephasingJz, NoiseKind::BitFlipJx] {
                for m in 1..=5 {
                    let a = trace_lindblad_power(&noise(kind, d), m, Superop).unwrap();
                    let b = trace_lindblad_power(&noise(kind, d), m, Multinomial).unwrap();
                    assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{kind:?} d={d} m={m}");
                }
            }
        }
    }

    #[test]
    fn squared_trace_operator_form() {
        for kind in [NoiseKind::DephasingJz, NoiseKind::BitFlipJx, NoiseKind::RelaxationJminus] {
            for d in 2..=6 {
                let l = build_collapse(&noise(kind, d)).unwrap();
                let want = super_lindblad(&l).unwrap().powi(2).trace().re;
                assert!((trace_lindblad_squared_operator(&l) - want).abs() < 1e-10 * want.abs());
            }
        }
        let l = random_matrix(3, 4);
        let want = super_lindblad(&l).unwrap().powi(2).trace().re;
        assert!((trace_lindblad_squared_operator(&l) - want).abs() < 1e-10 * want.abs());
    }

    #[test]
    fn gate_independent_examples() {
        let jz = noise(NoiseKind::DephasingJz, 2);
        for gt in [0.0, 0.1, 1.0, 7.5, 100.0] {
            let want = (1.0 - (-gt / 2.0f64).exp()) / 3.0;
            assert!((gate_independent_agi(&jz, gt, 2).unwrap() - want).abs() < 1e-14);
        }
        let mut rng = seeded_rng(31, 0);
        for d in [2, 3, 5] {
            for kind in [NoiseKind::DephasingJz, NoiseKind::BitFlipJx, NoiseKind::RelaxationJminus] {
                let gt: f64 = rng.gen_range(0.0..20.0);
                let g = Generator::new(&gate(GateKind::Identity, d), &noise(kind, d)).unwrap();
                let exact = 1.0 - agf_exact(&g.channel(gt).unwrap());
                assert!((gate_independent_agi(&noise(kind, d), gt, d).unwrap() - exact).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jz_second_order_recursion() {
        for d in 2..=10 {
            let nz = noise(NoiseKind::DephasingJz, d);
            let gt = 0.37;
            let tr2 = trace_lindblad_power(&nz, 2, LindbladTraceRoute::Superop).unwrap();
            let lhs = -gt * gt * tr2 / (2 * d * (d + 1)) as f64;
            let first = agi_first_order(&nz, gt, d).unwrap();
            let rhs = -gt * (2 * d * d - 3) as f64 / 20.0 * first;
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs(), "d = {d}");
        }
    }

    #[test]
    fn identity_cutoff_is_two() {
        for d in 2..=6 {
            for kind in [NoiseKind::DephasingJz, NoiseKind::RelaxationJminus] {
                let r = convergence_cutoff(&gate(GateKind::Identity, d), &noise(kind, d), 1.0, 1e-8).unwrap();
                assert_eq!(r.s_epsilon, 2);
            }
        }
    }

    #[test]
    fn derivative_oracle() {
        // central differences of AGI(γ) at γ = 0 with one Richardson step
        for (kind, d) in [(GateKind::Qft, 3), (GateKind::HaarRandom { seed: 2, stream: 0 }, 2)] {
            let nz = noise(NoiseKind::DephasingJz, d);
            let g = Generator::new(&gate(kind, d), &nz).unwrap();
            let agi = |x: f64| -> f64 {
                // AGI(−x) is evaluated through the same trace formula on the
                // (non-physical) reversed dissipator
                let e = expm(&(&g.s + &g.l.scale_real(x))).unwrap();
                let ch = crate::channel::QuantumChannel {
                    superop: e,
                    dim: d,
                    gamma_t: x,
                    gate: g.gate,
                    noise: g.noise,
                    target: g.u.clone(),
                };
                1.0 - agf_exact(&ch)
            };
            let h = 1e-2;
            let d1 = |h: f64| (agi(h) - agi(-h)) / (2.0 * h);
            let d2 = |h: f64| (agi(h) - 2.0 * agi(0.0) + agi(-h)) / (h * h);
            let first = (4.0 * d1(h / 2.0) - d1(h)) / 3.0;
            let second = (4.0 * d2(h / 2.0) - d2(h)) / 3.0;
            let series = SeriesCoefficients::new(&g, 1.0, 2, Cutoffs::default()).unwrap().series(1.0);
            assert!((first - series.terms[0]).abs() < 1e-6 * series.terms[0].abs());
            assert!((second / 2.0 - series.terms[1]).abs() < 1e-6 * series.terms[1].abs());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn odd_orders_are_traceless(seed in 0u64..10_000, d in prop::sample::select(vec![2usize, 4])) {
            let g = Generator::new(&gate(GateKind::HaarRandom { seed, stream: 0 }, d), &noise(NoiseKind::DephasingJz, d)).unwrap();
            let mut traces = CommutatorTraces::new(&g, TraceRoute::Commutator).unwrap();
            let ln = g.l.frobenius_norm().powi(2);
            let sn = g.s.frobenius_norm();
            for s in 0..=5usize {
                let tr = traces.next_trace();
                if s % 2 == 1 {
                    prop_assert!(tr.norm() < 1e-10 * ln * sn.powi(s as i32));
                }
            }
        }

        #[test]
        fn binomial_commutator_lemma(seed in 0u64..10_000, j in 1usize..=6) {
            let a = random_matrix(3, seed);
            let b = random_matrix(3, seed + 1);
            let mut total = C64::new(0.0, 0.0);
            let mut scale = 0.0f64;
            for n in 1..=j {
                let p = iterated_commutator(&a, &b, n).unwrap();
                let q = iterated_commutator(&a, &b, j - n).unwrap();
                let t = p.trace_product(&q) * binomial(j + 1, n);
                scale = scale.max(t.norm());
                total += t;
            }
            prop_assert!(total.norm() < 1e-9 * scale.max(1.0));
        }

        #[test]
        fn first_order_is_gate_independent(seed in 0u64..10_000, d in 2usize..5) {
            let nz = noise(NoiseKind::BitFlipJx, d);
            let a = agi_series(&gate(GateKind::HaarRandom { seed, stream: 0 }, d), &nz, 0.3, 1, Cutoffs::default());
            let b = agi_series(&gate(GateKind::Identity, d), &nz, 0.3, 1, Cutoffs::default()).unwrap();
            if let Ok(a) = a {
                prop_assert!((a.terms[0] - b.terms[0]).abs() < 1e-10);
            }
        }
    }
}
