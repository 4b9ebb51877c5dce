use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 2000;
const CONSTANT_VARIANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    /// `α (x − β)^δ`
    PowerLaw,
    /// `a₀ / (1 + e^{a₁(x − a₂)}) + a₃`
    Sigmoid,
    /// `b₀ e^{b₁(x − b₂)} + b₃`
    Exponential,
    /// `c₀ + c₁ x`
    Linear,
}

impl FitModel {
    pub fn n_params(self) -> usize {
        match self {
            FitModel::PowerLaw => 3,
            FitModel::Sigmoid | FitModel::Exponential => 4,
            FitModel::Linear => 2,
        }
    }

    pub fn eval(self, p: &[f64], x: f64) -> f64 {
        match self {
            FitModel::PowerLaw => p[0] * (x - p[1]).powf(p[2]),
            FitModel::Sigmoid => p[0] / (1.0 + (p[1] * (x - p[2])).exp()) + p[3],
            FitModel::Exponential => p[0] * (p[1] * (x - p[2])).exp() + p[3],
            FitModel::Linear => p[0] + p[1] * x,
        }
    }

    fn gradient(self, p: &[f64], x: f64, out: &mut [f64]) {
        match self {
            FitModel::PowerLaw => {
                let base = x - p[1];
                let v = base.powf(p[2]);
                out[0] = v;
                out[1] = -p[0] * p[2] * base.powf(p[2] - 1.0);
                out[2] = p[0] * v * base.ln();
            }
            FitModel::Sigmoid => {
                let e = (p[1] * (x - p[2])).exp();
                let den = 1.0 + e;
                let w = p[0] * e / (den * den);
                out[0] = 1.0 / den;
                out[1] = -w * (x - p[2]);
                out[2] = w * p[1];
                out[3] = 1.0;
            }
            FitModel::Exponential => {
                let e = (p[1] * (x - p[2])).exp();
                out[0] = e;
                out[1] = p[0] * e * (x - p[2]);
                out[2] = -p[0] * p[1] * e;
                out[3] = 1.0;
            }
            FitModel::Linear => {
                out[0] = 1.0;
                out[1] = x;
            }
        }
    }

    /// Starting point used when the caller supplies none.
    pub fn default_init(self, xs: &[f64], ys: &[f64]) -> Vec<f64> {
        let (x0, x1) = (xs[0], xs[xs.len() - 1]);
        let (y0, y1) = (ys[0], ys[ys.len() - 1]);
        match self {
            FitModel::PowerLaw => vec![1.0, 0.0, -1.0],
            FitModel::Sigmoid => {
                let mid = 0.5 * (x0 + x1);
                vec![y0 - y1, 4.0 / (x1 - x0), mid, y1]
            }
            FitModel::Exponential => {
                // successive differences of three points fix the rate
                let n = xs.len();
                let (i, j) = (n / 2, 2 * (n / 2));
                let r = (ys[j] - ys[i]) / (ys[i] - y0);
                let h = 0.5 * (xs[j] - x0);
                if r > 0.0 && r != 1.0 && r.is_finite() && h > 0.0 {
                    let rate = r.ln() / h;
                    let amp = (ys[i] - y0) / ((rate * (xs[i] - x0)).exp() - 1.0);
                    vec![amp, rate, x0, y0 - amp]
                } else {
                    vec![y1 - y0, 1.0 / (x1 - x0), x0, y0]
                }
            }
            FitModel::Linear => vec![y0, (y1 - y0) / (x1 - x0)],
        }
    }

    fn in_domain(self, p: &[f64], xs: &[f64]) -> bool {
        match self {
            FitModel::PowerLaw => xs.iter().all(|&x| x > p[1]),
            _ => true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub model: FitModel,
    pub params: Vec<f64>,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Least-squares fit by Levenberg–Marquardt from `init` (or the model's
/// default starting point).
pub fn fit_model(xs: &[f64], ys: &[f64], model: FitModel, init: Option<&[f64]>) -> Result<FitResult> {
    let np = model.n_params();
    if xs.len() != ys.len() {
        return Err(Error::Dimension(format!("{} abscissae for {} ordinates", xs.len(), ys.len())));
    }
    if xs.len() < np + 1 {
        return Err(Error::InvalidParameter(format!(
            "{model:?} needs at least {} points, got {}",
            np + 1,
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite data".into()));
    }
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let variance = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64;
    if variance < CONSTANT_VARIANCE * mean.abs().max(1.0).powi(2) {
        return Err(Error::ConstantData { variance });
    }
    let start = match init {
        Some(p) if p.len() != np => {
            return Err(Error::InvalidParameter(format!("{model:?} takes {np} parameters, got {}", p.len())))
        }
        Some(p) => p.to_vec(),
        None => model.default_init(xs, ys),
    };
    if !model.in_domain(&start, xs) {
        return Err(Error::InvalidParameter("initial parameters outside the model domain".into()));
    }
    let (params, iterations) = levenberg_marquardt(xs, ys, model, start)?;
    let residuals: Vec<f64> = xs.iter().zip(ys).map(|(&x, &y)| y - model.eval(&params, x)).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    Ok(FitResult { model, params, r_squared: 1.0 - ss_res / ss_tot, residuals, iterations })
}

fn sse(xs: &[f64], ys: &[f64], model: FitModel, p: &[f64]) -> f64 {
    xs.iter().zip(ys).map(|(&x, &y)| (y - model.eval(p, x)).powi(2)).sum()
}

fn levenberg_marquardt(xs: &[f64], ys: &[f64], model: FitModel, mut p: Vec<f64>) -> Result<(Vec<f64>, usize)> {
    let np = p.len();
    let scale: f64 = ys.iter().map(|y| y * y).sum();
    let mut cost = sse(xs, ys, model, &p);
    if !cost.is_finite() {
        return Err(Error::FitNonConvergence { iterations: 0 });
    }
    let mut lambda = 1e-3;
    let mut grad = vec![0.0; np];
    for iter in 1..=MAX_ITERATIONS {
        let mut jtj = vec![vec![0.0; np]; np];
        let mut jtr = vec![0.0; np];
        for (&x, &y) in xs.iter().zip(ys) {
            model.gradient(&p, x, &mut grad);
            let r = y - model.eval(&p, x);
            for a in 0..np {
                jtr[a] += grad[a] * r;
                for b in 0..np {
                    jtj[a][b] += grad[a] * grad[b];
                }
            }
        }
        if jtj.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::SingularJacobian);
        }
        let max_diag = (0..np).map(|a| jtj[a][a]).fold(0.0, f64::max);
        if (0..np).any(|a| jtj[a][a] <= 1e-300 * max_diag.max(1e-300)) {
            return Err(Error::SingularJacobian);
        }
        loop {
            let mut damped = jtj.clone();
            for (a, row) in damped.iter_mut().enumerate() {
                row[a] += lambda * jtj[a][a];
            }
            let step = match solve_small(damped, jtr.clone()) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    if lambda > 1e30 {
                        return Err(Error::SingularJacobian);
                    }
                    continue;
                }
            };
            let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            let trial_cost = if model.in_domain(&trial, xs) { sse(xs, ys, model, &trial) } else { f64::INFINITY };
            if trial_cost.is_finite() && trial_cost <= cost {
                let reduction = cost - trial_cost;
                let step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
                let p_norm = p.iter().map(|s| s * s).sum::<f64>().sqrt();
                p = trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-15);
                if reduction <= 1e-15 * cost || cost <= 1e-30 * scale || step_norm <= 1e-14 * (p_norm + 1e-14) {
                    return Ok((p, iter));
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                // no descent direction left at working precision
                return Ok((p, iter));
            }
        }
    }
    Err(Error::FitNonConvergence { iterations: MAX_ITERATIONS })
}

/// Gaussian elimination with partial pivoting for the normal equations.
fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (upper, lower) = a.split_at_mut(row);
            for (x, y) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *x -= f * y;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
