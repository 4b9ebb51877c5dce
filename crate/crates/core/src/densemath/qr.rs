use super::{ComplexMatrix, C64, ONE, ZERO};

/// `A = Q R` with `Q` unitary and `R` upper triangular.
#[derive(Clone, Debug)]
pub struct QrDecomposition {
    pub q: ComplexMatrix,
    pub r: ComplexMatrix,
}

/// Householder QR of a square matrix.
///
/// Each reflector is chosen so that the new diagonal entry is `−e^{i arg x₀}‖x‖`,
/// which avoids cancellation; callers that need a canonical phase (Haar
/// sampling) fix it afterwards from `diag(R)`.
pub fn householder_qr(a: &ComplexMatrix) -> QrDecomposition {
    let n = a.rows();
    let m = a.cols();
    let mut r = a.clone();
    let mut q = ComplexMatrix::identity(n);
    for k in 0..m.min(n.saturating_sub(1)) {
        let x: Vec<C64> = (k..n).map(|i| r[(i, k)]).collect();
        let norm_x = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm_x == 0.0 {
            continue;
        }
        let phase = if x[0].norm() > 0.0 { x[0] / x[0].norm() } else { ONE };
        let mut v = x;
        v[0] += phase * norm_x;
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in v.iter_mut() {
            *z /= vnorm;
        }
        // R ← (1 − 2vv†) R on rows k..n
        for j in 0..m {
            let mut dot = ZERO;
            for (i, vi) in v.iter().enumerate() {
                dot += vi.conj() * r[(k + i, j)];
            }
            for (i, vi) in v.iter().enumerate() {
                r[(k + i, j)] -= *vi * dot * 2.0;
            }
        }
        // Q ← Q (1 − 2vv†) on columns k..n
        for i in 0..n {
            let mut dot = ZERO;
            for (l, vl) in v.iter().enumerate() {
                dot += q[(i, k + l)] * vl;
            }
            for (l, vl) in v.iter().enumerate() {
                q[(i, k + l)] -= dot * vl.conj() * 2.0;
            }
        }
        for i in k + 1..n {
            r[(i, k)] = ZERO;
        }
    }
    QrDecomposition { q, r }
}
