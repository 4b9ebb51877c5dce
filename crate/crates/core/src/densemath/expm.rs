//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! (Higham 2005), the degree chosen from the 1-norm and capped at 13.

use super::{solve, ComplexMatrix};
use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Largest tolerated number of squarings; beyond this the result is assumed to
/// overflow.
const MAX_SQUARINGS: i32 = 1000;

pub fn expm(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.require_square("expm input")?;
    let norm = a.one_norm();
    if !norm.is_finite() {
        return Err(Error::NumericRange("expm of a matrix with infinite norm".into()));
    }
    let ident = ComplexMatrix::identity(n);
    if norm == 0.0 {
        return Ok(ident);
    }

    for &(m, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = pade_low(a, coeffs, &ident);
            return finish(&u, &v, 0);
        }
    }

    let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    if s > MAX_SQUARINGS {
        return Err(Error::NumericRange(format!(
            "expm norm {norm:.3e} too large"
        )));
    }
    let a = a.scale_real(0.5f64.powi(s));
    let (u, v) = pade13(&a, &ident);
    finish(&u, &v, s)
}

fn finish(u: &ComplexMatrix, v: &ComplexMatrix, squarings: i32) -> Result<ComplexMatrix> {
    let p = v + u;
    let q = v - u;
    let mut r = solve(&q, &p)?;
    for _ in 0..squarings {
        r = r.matmul(&r);
    }
    if !r.is_finite() {
        return Err(Error::NumericRange("expm overflowed".into()));
    }
    Ok(r)
}

fn pade_low(a: &ComplexMatrix, b: &[f64], ident: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let a2 = a.matmul(a);
    let mut u = ident.scale_real(b[1]);
    let mut v = ident.scale_real(b[0]);
    let mut power = ident.clone();
    for k in 1..b.len() / 2 {
        power = power.matmul(&a2);
        u += &power.scale_real(b[2 * k + 1]);
        v += &power.scale_real(b[2 * k]);
    }
    (a.matmul(&u), v)
}

fn pade13(a: &ComplexMatrix, ident: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let b = &B13;
    let a2 = a.matmul(a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);

    let mut inner_u = a6.scale_real(b[13]);
    inner_u += &a4.scale_real(b[11]);
    inner_u += &a2.scale_real(b[9]);
    let mut u = a6.matmul(&inner_u);
    u += &a6.scale_real(b[7]);
    u += &a4.scale_real(b[5]);
    u += &a2.scale_real(b[3]);
    u += &ident.scale_real(b[1]);
    let u = a.matmul(&u);

    let mut inner_v = a6.scale_real(b[12]);
    inner_v += &a4.scale_real(b[10]);
    inner_v += &a2.scale_real(b[8]);
    let mut v = a6.matmul(&inner_v);
    v += &a6.scale_real(b[6]);
    v += &a4.scale_real(b[4]);
    v += &a2.scale_real(b[2]);
    v += &ident.scale_real(b[0]);
    (u, v)
}
