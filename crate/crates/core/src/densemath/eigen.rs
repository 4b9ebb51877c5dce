use std::f64::consts::PI;

use super::{ComplexMatrix, C64, I, ZERO};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
/// Mixing coefficient for the first Hermitian probe `Re A + c·Im A`; any
/// irrational value keeps accidental degeneracies of distinct eigenvalues rare.
const PROBE_MIX: f64 = 0.577_215_664_901_532_9;
/// Relative gap below which probe eigenvalues are treated as one cluster.
const CLUSTER_TOL: f64 = 1e-5;

/// Eigen-decomposition `A = V diag(λ) V†` of a normal matrix.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<C64>,
    pub eigenvectors: ComplexMatrix,
}

impl SpectralDecomposition {
    /// `V f(Λ) V†`.
    pub fn apply_function(&self, f: impl Fn(C64) -> C64) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let n = v.rows();
        let mut scaled = v.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let fz = f(lambda);
            for i in 0..n {
                scaled[(i, j)] *= fz;
            }
        }
        scaled.matmul(&v.adjoint())
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.apply_function(|z| z)
    }
}

/// Real spectrum (ascending) and unitary eigenvectors of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

/// Cyclic complex Jacobi diagonalisation of a Hermitian matrix.
pub fn hermitian_eigen(a: &ComplexMatrix) -> Result<HermitianEigen> {
    let n = a.require_square("hermitian_eigen input")?;
    let defect = (a - &a.adjoint()).frobenius_norm();
    if defect > 1e-8 * a.frobenius_norm().max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    let mut m = hermitize(a);
    let mut v = ComplexMatrix::identity(n);
    let scale = m.frobenius_norm();
    if scale > 0.0 {
        jacobi(&mut m, &mut v, scale)?;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.total_cmp(&m[(j, j)].re));
    let eigenvalues = order.iter().map(|&i| m[(i, i)].re).collect();
    let mut vs = ComplexMatrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        vs.column_mut(new).copy_from_slice(v.column(old));
    }
    Ok(HermitianEigen { eigenvalues, eigenvectors: vs })
}

fn off_norm(m: &ComplexMatrix) -> f64 {
    let n = m.rows();
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                acc += m[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

fn jacobi(m: &mut ComplexMatrix, v: &mut ComplexMatrix, scale: f64) -> Result<()> {
    let n = m.rows();
    let target = f64::EPSILON * scale * 0.5;
    for _ in 0..MAX_SWEEPS {
        if off_norm(m) <= target {
            return Ok(());
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                let mag = apq.norm();
                if mag <= f64::MIN_POSITIVE || mag < 1e-3 * target / n as f64 {
                    continue;
                }
                rotate(m, v, p, q, apq, mag);
            }
        }
    }
    if off_norm(m) <= 1e3 * target {
        return Ok(());
    }
    Err(Error::NoConvergence(format!(
        "Jacobi eigensolver after {MAX_SWEEPS} sweeps"
    )))
}

/// Annihilates `m[p,q]` with `J = [[c, s], [−s e^{−iφ}, c e^{−iφ}]]`,
/// `m ← J† m J`, `v ← v J`.
fn rotate(m: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize, apq: C64, mag: f64) {
    let n = m.rows();
    let phase = apq / mag;
    let tau = (m[(q, q)].re - m[(p, p)].re) / (2.0 * mag);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let e = phase.conj();
    let (jpp, jpq, jqp, jqq) = (C64::new(c, 0.0), C64::new(s, 0.0), e * -s, e * c);

    for i in 0..n {
        let (xp, xq) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = xp * jpp + xq * jqp;
        m[(i, q)] = xp * jpq + xq * jqq;
    }
    for j in 0..n {
        let (yp, yq) = (m[(p, j)], m[(q, j)]);
        m[(p, j)] = jpp.conj() * yp + jqp.conj() * yq;
        m[(q, j)] = jpq.conj() * yp + jqq.conj() * yq;
    }
    m[(p, q)] = ZERO;
    m[(q, p)] = ZERO;
    m[(p, p)].im = 0.0;
    m[(q, q)].im = 0.0;
    for i in 0..n {
        let (xp, xq) = (v[(i, p)], v[(i, q)]);
        v[(i, p)] = xp * jpp + xq * jqp;
        v[(i, q)] = xp * jpq + xq * jqq;
    }
}

/// Spectral decomposition of a normal matrix with unitary eigenvectors.
///
/// The matrix is diagonalised through the Hermitian probe `Re A + c·Im A`;
/// clusters of nearly equal probe eigenvalues are split again with the
/// orthogonal probe `Im A − c·Re A` restricted to the cluster. Eigenvalues are
/// the Rayleigh quotients `vᵢ† A vᵢ`.
pub fn spectral_decompose_normal(a: &ComplexMatrix) -> Result<SpectralDecomposition> {
    let n = a.require_square("spectral_decompose_normal input")?;
    let a_h = a.adjoint();
    let defect = (&a_h.matmul(a) - &a.matmul(&a_h)).frobenius_norm();
    let fro = a.frobenius_norm();
    if defect > 1e-8 * fro * fro {
        return Err(Error::NotNormal(defect));
    }
    let re = (a + &a_h).scale_real(0.5);
    let im = (a - &a_h).scale(-I * 0.5);
    let probe = &re + &im.scale_real(PROBE_MIX);
    let first = hermitian_eigen(&probe)?;

    let tol = CLUSTER_TOL * (fro / (n as f64).sqrt()).max(f64::MIN_POSITIVE);
    let ortho = &im - &re.scale_real(PROBE_MIX);
    let mut vectors = first.eigenvectors.clone();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && first.eigenvalues[end] - first.eigenvalues[end - 1] < tol {
            end += 1;
        }
        if end - start > 1 {
            let w = sub_columns(&first.eigenvectors, start, end);
            let restricted = w.adjoint().matmul(&ortho).matmul(&w);
            let inner = hermitian_eigen(&restricted)?;
            let rotated = w.matmul(&inner.eigenvectors);
            for (k, j) in (start..end).enumerate() {
                vectors.column_mut(j).copy_from_slice(rotated.column(k));
            }
        }
        start = end;
    }

    let av = a.matmul(&vectors);
    let eigenvalues = (0..n)
        .map(|j| {
            vectors
                .column(j)
                .iter()
                .zip(av.column(j))
                .map(|(x, y)| x.conj() * y)
                .sum()
        })
        .collect();
    Ok(SpectralDecomposition { eigenvalues, eigenvectors: vectors })
}

fn sub_columns(m: &ComplexMatrix, start: usize, end: usize) -> ComplexMatrix {
    let rows = m.rows();
    let mut data = Vec::with_capacity(rows * (end - start));
    for j in start..end {
        data.extend_from_slice(m.column(j));
    }
    ComplexMatrix::from_raw(rows, end - start, data)
}

fn require_unitary(u: &ComplexMatrix) -> Result<()> {
    let n = u.require_square("unitary input")?;
    let defect = (&u.adjoint().matmul(u) - &ComplexMatrix::identity(n)).frobenius_norm();
    if defect > 1e-10 * (n as f64).sqrt().max(1.0) {
        return Err(Error::NotUnitary(defect));
    }
    Ok(())
}

/// Eigenphase on the principal branch `(−π, π]`.
pub(crate) fn principal_phase(z: C64) -> f64 {
    let theta = z.arg();
    if theta <= -PI + 1e-12 {
        theta + 2.0 * PI
    } else {
        theta
    }
}

/// Hermitian `H` with `e^{−iH} = u`, built from eigenphases `θ ∈ (−π, π]` as
/// `H = −V diag(θ) V†`.
pub fn unitary_log(u: &ComplexMatrix) -> Result<ComplexMatrix> {
    require_unitary(u)?;
    let dec = spectral_decompose_normal(u)?;
    let h = dec.apply_function(|z| C64::new(-principal_phase(z), 0.0));
    Ok(hermitize(&h))
}

/// Hermitian `H` with `e^{−iH} = u` and spectrum in `(−π, π]`, so an
/// eigenvalue `−1` of `u` becomes `+π` in `H`.
pub fn hamiltonian_log(u: &ComplexMatrix) -> Result<ComplexMatrix> {
    require_unitary(u)?;
    let dec = spectral_decompose_normal(u)?;
    let h = dec.apply_function(|z| {
        let theta = z.arg();
        let theta = if theta >= PI - 1e-12 { theta - 2.0 * PI } else { theta };
        C64::new(-theta, 0.0)
    });
    Ok(hermitize(&h))
}

/// `u^η = V diag(e^{iηθ}) V†` with `θ ∈ (−π, π]`.
pub fn matrix_power_unitary(u: &ComplexMatrix, eta: f64) -> Result<ComplexMatrix> {
    if !eta.is_finite() {
        return Err(Error::InvalidParameter(format!("exponent {eta}")));
    }
    require_unitary(u)?;
    let dec = spectral_decompose_normal(u)?;
    Ok(dec.apply_function(|z| C64::from_polar(1.0, eta * principal_phase(z))))
}

pub(crate) fn hermitize(h: &ComplexMatrix) -> ComplexMatrix {
    (h + &h.adjoint()).scale_real(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densemath::expm;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn x2() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn random_unitary(n: usize, seed: u64) -> ComplexMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let g = ComplexMatrix::new(n, n, data).unwrap();
        crate::densemath::householder_qr(&g).q
    }

    fn sorted_re(v: &[C64]) -> Vec<f64> {
        let mut r: Vec<f64> = v.iter().map(|z| z.re).collect();
        r.sort_by(f64::total_cmp);
        r
    }

    #[test]
    fn diagonal_input() {
        let d = [c(2.0, 0.0), c(-1.0, 0.5), c(0.0, 3.0)];
        let dec = spectral_decompose_normal(&ComplexMatrix::from_diag(&d)).unwrap();
        for z in d {
            assert!(dec.eigenvalues.iter().any(|w| (w - z).norm() < 1e-14));
        }
        for j in 0..3 {
            let nonzero = dec.eigenvectors.column(j).iter().filter(|z| z.norm() > 1e-12).count();
            assert_eq!(nonzero, 1);
        }
    }

    #[test]
    fn shift_and_hadamard_spectra() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = ComplexMatrix::from_real_rows(&[vec![s, s], vec![s, -s]]).unwrap();
        for m in [x2(), h] {
            let dec = spectral_decompose_normal(&m).unwrap();
            let ev = sorted_re(&dec.eigenvalues);
            assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
            assert!(dec.eigenvectors.is_unitary(1e-12));
        }
    }

    #[test]
    fn degenerate_and_unitary_reconstruction() {
        let z = ComplexMatrix::from_diag(&[c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 1.0)]);
        let u = random_unitary(4, 3);
        let a = u.matmul(&z).matmul(&u.adjoint());
        let dec = spectral_decompose_normal(&a).unwrap();
        assert!(dec.reconstruct().relative_distance(&a) < 1e-12);
        for n in [2, 5, 16, 40] {
            let u = random_unitary(n, n as u64);
            let dec = spectral_decompose_normal(&u).unwrap();
            assert!(dec.reconstruct().relative_distance(&u) < 1e-10);
            assert!(dec.eigenvectors.is_unitary(1e-11));
            assert!(dec.eigenvalues.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn rejects_non_normal() {
        let a = ComplexMatrix::from_real_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(spectral_decompose_normal(&a), Err(Error::NotNormal(_))));
    }

    #[test]
    fn logarithm_examples() {
        assert_eq!(
            unitary_log(&ComplexMatrix::identity(3)).unwrap().frobenius_norm(),
            0.0
        );
        let z = ComplexMatrix::from_real_diag(&[1.0, -1.0]);
        let h = unitary_log(&z).unwrap();
        assert!((h[(1, 1)].re + PI).abs() < 1e-12);
        let back = expm(&h.scale(-I)).unwrap();
        assert!((&back - &z).frobenius_norm() < 1e-12);

        let hx = unitary_log(&x2()).unwrap();
        let ev = hermitian_eigen(&hx).unwrap().eigenvalues;
        assert!(ev[0].abs() < 1e-12 || (ev[0].abs() - PI).abs() < 1e-12);
        assert!((ev.iter().map(|x| x.abs()).sum::<f64>() - PI).abs() < 1e-12);
        assert!(unitary_log(&ComplexMatrix::from_real_diag(&[2.0, 1.0])).is_err());

        let hx = hamiltonian_log(&x2()).unwrap();
        let ev = hermitian_eigen(&hx).unwrap().eigenvalues;
        assert!(ev[0].abs() < 1e-12 && (ev[1] - PI).abs() < 1e-12);
        assert!((&expm(&hx.scale(-I)).unwrap() - &x2()).frobenius_norm() < 1e-12);
    }

    #[test]
    fn square_root_of_shift() {
        let r = matrix_power_unitary(&x2(), 0.5).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let p = C64::from_polar(s, PI / 4.0);
        let m = C64::from_polar(s, -PI / 4.0);
        let want = ComplexMatrix::from_rows(&[vec![p, m], vec![m, p]]).unwrap();
        assert!((&r - &want).frobenius_norm() < 1e-12);
    }

    #[test]
    fn power_endpoints() {
        let u = random_unitary(4, 11);
        assert!((&matrix_power_unitary(&u, 0.0).unwrap() - &ComplexMatrix::identity(4)).frobenius_norm() < 1e-12);
        assert!(matrix_power_unitary(&u, 1.0).unwrap().relative_distance(&u) < 1e-12);
    }

    #[test]
    fn hermitian_jacobi_sorted() {
        let a = ComplexMatrix::from_rows(&[
            vec![c(2.0, 0.0), c(0.0, 1.0)],
            vec![c(0.0, -1.0), c(2.0, 0.0)],
        ])
        .unwrap();
        let e = hermitian_eigen(&a).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 3.0).abs() < 1e-14);
    }
}
