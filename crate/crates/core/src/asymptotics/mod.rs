//! Strong-coupling behaviour of AGI curves: plateaus, overshoot, saturation
//! points and model fits.

mod fit;
mod spline;

pub use fit::{fit_model, FitModel, FitResult};
pub use spline::{bisect, CubicSpline};

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{agf_exact, Generator};
use crate::error::{Error, Result};
use crate::qudit::{GateSpec, NoiseSpec};

pub const DEFAULT_SATURATION_EPSILON: f64 = 1e-8;
/// Relative margin above the plateau that counts as overshoot.
pub const OVERSHOOT_TOLERANCE: f64 = 1e-6;
/// A curve whose last grid value is farther than this from the limit is
/// reported as unconverged.
pub const PLATEAU_TOLERANCE: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Monotonic,
    Overshoot,
}

#[derive(Clone, Debug, Serialize)]
pub struct AgiCurve {
    pub gate: GateSpec,
    pub noise: NoiseSpec,
    pub grid: Vec<f64>,
    pub agi: Vec<f64>,
    /// `𝓘*`, the AGI of the γt → ∞ channel.
    pub plateau: f64,
    pub converged: bool,
    pub saturation: Option<f64>,
    pub classification: Option<Classification>,
    pub overshoot_height: Option<f64>,
    /// Several separate excursions above the plateau.
    pub ambiguous: bool,
}

/// Result of [`classify_curve`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Shape {
    pub classification: Classification,
    pub overshoot_height: Option<f64>,
    /// Number of disjoint runs of grid points above the plateau.
    pub excursions: usize,
}

/// `n` points from `min` to `max`, `points_per_decade` per factor of ten.
pub fn log_grid(min: f64, max: f64, points_per_decade: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max > min && max.is_finite()) || points_per_decade == 0 {
        return Err(Error::InvalidParameter(format!(
            "log grid {min}:{max}:{points_per_decade}"
        )));
    }
    let decades = (max / min).log10();
    let n = ((decades * points_per_decade as f64).round() as usize).max(1) + 1;
    let (a, b) = (min.log10(), max.log10());
    Ok((0..n)
        .map(|i| match i {
            0 => min,
            i if i == n - 1 => max,
            i => 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64),
        })
        .collect())
}

/// `10⁻²..10⁴` at 25 points per decade.
pub fn default_grid() -> Vec<f64> {
    log_grid(1e-2, 1e4, 25).expect("static grid")
}

/// `(1 − 2/(d+1), 1 − 1/d, 1 − 1/(d+1))`.
pub fn plateau_bounds(d: usize) -> Result<(f64, f64, f64)> {
    if d < 2 {
        return Err(Error::Dimension(format!("d = {d} < 2")));
    }
    let d = d as f64;
    Ok((1.0 - 2.0 / (d + 1.0), 1.0 - 1.0 / d, 1.0 - 1.0 / (d + 1.0)))
}

/// Exact AGI over `grid` (in parallel, results in grid order), plateau,
/// classification and saturation point at [`DEFAULT_SATURATION_EPSILON`].
pub fn sweep_agi(gate: &GateSpec, noise: &NoiseSpec, grid: &[f64]) -> Result<AgiCurve> {
    let g = Generator::new(gate, noise)?;
    sweep_generator(&g, grid)
}

pub fn sweep_generator(g: &Generator, grid: &[f64]) -> Result<AgiCurve> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) || grid[0] < 0.0 {
        return Err(Error::InvalidParameter("grid must be non-negative and strictly increasing with ≥ 2 points".into()));
    }
    let agi = grid
        .par_iter()
        .map(|&gt| g.agi(gt))
        .collect::<Result<Vec<f64>>>()?;
    let plateau = 1.0 - agf_exact(&g.strong_coupling_channel()?);
    let converged = (agi[agi.len() - 1] - plateau).abs() <= PLATEAU_TOLERANCE;
    let mut curve = AgiCurve {
        gate: g.gate,
        noise: g.noise,
        grid: grid.to_vec(),
        agi,
        plateau,
        converged,
        saturation: None,
        classification: None,
        overshoot_height: None,
        ambiguous: false,
    };
    if converged {
        let shape = classify_curve(&curve)?;
        curve.classification = Some(shape.classification);
        curve.overshoot_height = shape.overshoot_height;
        curve.ambiguous = shape.excursions > 1;
        curve.saturation = saturation_point(&curve, DEFAULT_SATURATION_EPSILON).ok();
    }
    Ok(curve)
}

/// Overshoot when the curve rises more than [`OVERSHOOT_TOLERANCE`] (relative)
/// above its plateau; the number of separate excursions is reported so that
/// multi-peak curves can be reviewed.
pub fn classify_curve(curve: &AgiCurve) -> Result<Shape> {
    if !curve.converged {
        return Err(Error::Unconverged(format!("plateau of {} not reached on the grid", curve.gate)));
    }
    let threshold = curve.plateau * (1.0 + OVERSHOOT_TOLERANCE);
    let mut excursions = 0;
    let mut above = false;
    for &v in &curve.agi {
        let now = v > threshold;
        if now && !above {
            excursions += 1;
        }
        above = now;
    }
    let peak = curve.agi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(if excursions == 0 {
        Shape { classification: Classification::Monotonic, overshoot_height: None, excursions }
    } else {
        Shape {
            classification: Classification::Overshoot,
            overshoot_height: Some(peak - curve.plateau),
            excursions,
        }
    })
}

/// `(γt)*`: beyond this coupling the curve stays within `epsilon` of its
/// plateau.
///
/// Inside the grid the root of `|AGI − 𝓘*| = ε` is located on a natural cubic
/// spline in `ln γt` by bisection. When even the last grid point is farther
/// than `epsilon` from the plateau, the algebraic tail `|AGI − 𝓘*| ∝ (γt)^k`
/// (`k ≈ −1`) measured on the last two points is extended to `epsilon`.
pub fn saturation_point(curve: &AgiCurve, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon}")));
    }
    if !curve.converged {
        return Err(Error::Unconverged(format!("plateau of {} not reached on the grid", curve.gate)));
    }
    let n = curve.grid.len();
    let dist: Vec<f64> = curve.agi.iter().map(|a| (a - curve.plateau).abs()).collect();
    if dist[n - 1] > epsilon {
        let (x0, x1) = (curve.grid[n - 2], curve.grid[n - 1]);
        let (r0, r1) = (dist[n - 2], dist[n - 1]);
        let k = (r1 / r0).ln() / (x1 / x0).ln();
        if !k.is_finite() || (k + 1.0).abs() > 0.1 {
            return Err(Error::NoBracket(format!(
                "curve is {:.3e} from its plateau at the last grid point and its tail exponent {k:.3} is not algebraic",
                r1
            )));
        }
        return Ok(x1 * (epsilon / r1).powf(1.0 / k));
    }
    let last_out = match (0..n).rev().find(|&i| dist[i] > epsilon) {
        Some(i) => i,
        None => {
            return Err(Error::NoBracket(format!("curve within {epsilon:e} of its plateau on the whole grid")))
        }
    };
    if curve.grid[0] <= 0.0 {
        return Err(Error::InvalidParameter("saturation search needs a positive grid".into()));
    }
    let u: Vec<f64> = curve.grid.iter().map(|x| x.ln()).collect();
    let spline = CubicSpline::new(&u, &curve.agi)?;
    let f = |v: f64| (spline.eval(v) - curve.plateau).abs() - epsilon;
    let root = bisect(f, u[last_out], u[last_out + 1], 1e-14)?;
    Ok(root.exp())
}
