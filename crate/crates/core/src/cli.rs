//! The `qudit-agi` command line: argument parsing, parallel scheduling and
//! CSV/JSON output.
//!
//! Every output starts with a header block (tool version, command, the
//! configuration as JSON and the seed). Results never depend on the number of
//! worker threads.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::asymptotics::{
    fit_model, log_grid, plateau_bounds, saturation_point, sweep_generator, Classification, FitModel,
};
use crate::channel::{agf_exact, evolve_diagnostics, Generator};
use crate::error::{Error, Result};
use crate::haar_stats::{
    chi_square_uniform, kl_divergence, plateau_distribution_on, unfold_spacings, wigner_surmise, GateRecord,
    Histogram, SpectralSample,
};
use crate::perturbation::{
    agi_first_order, convergence_cutoff_with, gate_independent_agi, second_order_value, Cutoffs,
    SeriesCoefficients, TraceRoute, DEFAULT_TAIL_TOLERANCE,
};
use crate::qudit::{GateKind, GateSpec, NoiseKind, NoiseSpec};

/// Environment variable read when `--threads` is not given.
pub const THREADS_ENV: &str = "QUDIT_AGI_THREADS";
const MAX_ORDER: usize = 6;

#[derive(Parser, Debug)]
#[command(name = "qudit-agi", version, about = "Average gate infidelity of qudit gates under Lindblad noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// Output file (standard output when absent)
    #[arg(long, short, global = true)]
    #[serde(skip)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv, global = true)]
    pub format: Format,
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
    /// Worker threads
    #[arg(long, env = THREADS_ENV, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Convergence tolerance (second-order cutoff, saturation point)
    #[arg(long, default_value_t = 1e-8, global = true)]
    pub epsilon: f64,
    /// Highest perturbative order reported
    #[arg(long, default_value_t = 2, global = true)]
    pub order: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseArg {
    Jz,
    Jx,
    #[value(alias = "jm")]
    Jminus,
}

impl From<NoiseArg> for NoiseKind {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Jz => NoiseKind::DephasingJz,
            NoiseArg::Jx => NoiseKind::BitFlipJx,
            NoiseArg::Jminus => NoiseKind::RelaxationJminus,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exact AGI and perturbative partial sums over a γt grid
    Sweep(SweepArgs),
    /// Plateau, overshoot and saturation point per gate
    Plateau(PlateauArgs),
    /// Relative errors of the perturbative series and the second-order cutoff
    Perturb(PerturbArgs),
    /// Level density and spacing statistics of the Haar sampler
    HaarValidate(HaarArgs),
    /// Least-squares fit of a model to two columns of a table
    Fit(FitArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sweep(_) => "sweep",
            Command::Plateau(_) => "plateau",
            Command::Perturb(_) => "perturb",
            Command::HaarValidate(_) => "haar-validate",
            Command::Fit(_) => "fit",
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub dim: Vec<usize>,
    /// Gate names, optionally with a parameter: identity, x, z, qft, t,
    /// phase=φ, xpow=η, zpow=η, haar[=stream]
    #[arg(long, value_delimiter = ',', default_value = "identity")]
    pub gate: Vec<String>,
    /// Parameter for phase/xpow/zpow gates given without one
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "jz")]
    pub noise: Vec<NoiseArg>,
    /// `min:max[:points_per_decade]`, log-spaced; linear from 0
    #[arg(long = "gamma-t", default_value = "1e-2:1e4:25")]
    pub gamma_t: String,
    /// Add mean purity and coherence of evolved random states
    #[arg(long)]
    pub diagnostics: bool,
    #[arg(long, default_value_t = 1000)]
    pub n_states: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct PlateauArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub dim: Vec<usize>,
    /// Gate names as for `sweep`; `haar` expands to `--n-gates` random gates
    #[arg(long, value_delimiter = ',', default_value = "haar")]
    pub gate: Vec<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum, default_value = "jz")]
    pub noise: NoiseArg,
    #[arg(long, default_value_t = 1000)]
    pub n_gates: usize,
    #[arg(long = "gamma-t", default_value = "1e-2:1e4:25")]
    pub gamma_t: String,
}

#[derive(Args, Debug, Serialize)]
pub struct PerturbArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub dim: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "identity")]
    pub gate: Vec<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum, default_value = "jz")]
    pub noise: NoiseArg,
    #[arg(long = "gamma-t", default_value = "0.1")]
    pub gamma_t: String,
    /// Gate-time sweep `min:max[:points]` (linear) reporting s_ε(t)
    #[arg(long = "sweep-t")]
    pub sweep_t: Option<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct HaarArgs {
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    #[arg(long, default_value_t = 10_000)]
    pub n_eigenvalues: usize,
    #[arg(long, default_value_t = 100)]
    pub phase_bins: usize,
    #[arg(long, default_value_t = 40)]
    pub spacing_bins: usize,
    #[arg(long, default_value_t = 4.0)]
    pub spacing_max: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct FitArgs {
    /// CSV table; lines starting with '#' are skipped
    #[arg(long)]
    pub input: PathBuf,
    /// Abscissa column (name or zero-based index)
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    #[arg(long, value_enum, default_value = "power-law")]
    pub model: FitModel,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub init: Option<Vec<f64>>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 2 configuration error, 3 numeric failure,
/// 4 fit failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let report = match cli.common.threads {
        Some(0) => return Err(Error::InvalidParameter("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(|| dispatch(cli))?,
        None => dispatch(cli)?,
    };
    let text = match cli.common.format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
    };
    write_output(cli.common.output.as_deref(), &text)?;
    match report.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    let res = match path {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    res.map_err(|e| Error::InvalidParameter(format!("cannot write output: {e}")))
}

fn dispatch(cli: &Cli) -> Result<Report> {
    let c = &cli.common;
    if !(c.epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("--epsilon {} must be positive", c.epsilon)));
    }
    if c.order == 0 || c.order > MAX_ORDER {
        return Err(Error::InvalidParameter(format!("--order must be in 1..={MAX_ORDER}")));
    }
    let config = match &cli.command {
        Command::Sweep(a) => json!({ "common": c, "args": a }),
        Command::Plateau(a) => json!({ "common": c, "args": a }),
        Command::Perturb(a) => json!({ "common": c, "args": a }),
        Command::HaarValidate(a) => json!({ "common": c, "args": a }),
        Command::Fit(a) => json!({ "common": c, "args": a }),
    };
    let mut report = Report::new(cli.command.name(), config, c.seed);
    match &cli.command {
        Command::Sweep(a) => cmd_sweep(c, a, &mut report)?,
        Command::Plateau(a) => cmd_plateau(c, a, &mut report)?,
        Command::Perturb(a) => cmd_perturb(c, a, &mut report)?,
        Command::HaarValidate(a) => cmd_haar_validate(c, a, &mut report)?,
        Command::Fit(a) => cmd_fit(a, &mut report)?,
    }
    Ok(report)
}

/// Values of a `min:max[:n]` range.
///
/// A single number is a one-point range. With `min > 0` the points are
/// log-spaced with `n` (default 25) per decade; with `min = 0` they are `n`
/// (default 11) equally spaced points.
pub fn parse_gamma_range(spec: &str) -> Result<Vec<f64>> {
    let (min, max, n) = split_range(spec)?;
    let Some(max) = max else { return Ok(vec![min]) };
    if min == 0.0 {
        linear_points(min, max, n.unwrap_or(11))
    } else {
        log_grid(min, max, n.unwrap_or(25))
    }
}

/// `min:max[:points]`, always linear (default 9 points).
pub fn parse_linear_range(spec: &str) -> Result<Vec<f64>> {
    let (min, max, n) = split_range(spec)?;
    match max {
        None => Ok(vec![min]),
        Some(max) => linear_points(min, max, n.unwrap_or(9)),
    }
}

fn split_range(spec: &str) -> Result<(f64, Option<f64>, Option<usize>)> {
    let bad = || Error::InvalidParameter(format!("invalid range '{spec}' (expected min:max[:n])"));
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0).ok_or_else(bad);
    match parts.as_slice() {
        [v] => Ok((num(v)?, None, None)),
        [a, b] | [a, b, _] => {
            let (min, max) = (num(a)?, num(b)?);
            if !(max > min) {
                return Err(Error::InvalidParameter(format!("range '{spec}' is empty")));
            }
            let n = match parts.get(2) {
                Some(s) => Some(s.parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(bad)?),
                None => None,
            };
            Ok((min, Some(max), n))
        }
        _ => Err(bad()),
    }
}

fn linear_points(min: f64, max: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter("a linear range needs at least 2 points".into()));
    }
    Ok((0..n).map(|i| min + (max - min) * i as f64 / (n - 1) as f64).collect())
}

/// A gate token `name[=parameter]` at dimension `d`.
pub fn parse_gate(token: &str, d: usize, eta: Option<f64>, seed: u64) -> Result<GateSpec> {
    let (name, param) = match token.split_once('=') {
        Some((n, p)) => (n.trim(), Some(p.trim())),
        None => (token.trim(), None),
    };
    let real = |p: Option<&str>| -> Result<f64> {
        match p {
            Some(s) => s
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad parameter in gate '{token}'"))),
            None => eta.ok_or_else(|| Error::InvalidParameter(format!("gate '{name}' needs a parameter or --eta"))),
        }
    };
    let kind = match name.to_ascii_lowercase().as_str() {
        "identity" | "id" | "1" => GateKind::Identity,
        "x" => GateKind::ShiftX,
        "z" => GateKind::ClockZ,
        "qft" | "f" => GateKind::Qft,
        "t" => GateKind::TGate,
        "phase" => GateKind::Phase(real(param)?),
        "xpow" => GateKind::XPower(real(param)?),
        "zpow" => GateKind::ZPower(real(param)?),
        "haar" => {
            let stream = match param {
                Some(s) => s
                    .parse::<u64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad stream in gate '{token}'")))?,
                None => 0,
            };
            GateKind::HaarRandom { seed, stream }
        }
        other => return Err(Error::InvalidParameter(format!("unknown gate '{other}'"))),
    };
    GateSpec::new(kind, d)
}

fn check_dims(dims: &[usize]) -> Result<()> {
    match dims.iter().find(|&&d| d < 2) {
        Some(d) => Err(Error::InvalidParameter(format!("dimension {d} < 2"))),
        None => Ok(()),
    }
}

fn eta_cell(g: &GateSpec) -> Cell {
    match g.kind {
        GateKind::HaarRandom { stream, .. } => Cell::Int(stream),
        k => k.parameter().map_or(Cell::Empty, Cell::Num),
    }
}

/// `(exact − approx)/exact`; undefined (NaN) at zero coupling.
fn relative_error(gamma_t: f64, exact: f64, approx: f64) -> f64 {
    if gamma_t == 0.0 {
        f64::NAN
    } else {
        (exact - approx) / exact
    }
}

/// Partial sums `𝓘^(1) + … + 𝓘^(k)` for `k = 1..=order` at `gamma_t`.
struct SeriesEvaluator {
    dim: usize,
    noise: NoiseSpec,
    second: Option<crate::perturbation::ConvergenceReport>,
    higher: Option<SeriesCoefficients>,
    order: usize,
}

impl SeriesEvaluator {
    fn new(g: &Generator, order: usize, epsilon: f64) -> Result<Self> {
        let second = if order >= 2 {
            match convergence_cutoff_with(g, 1.0, epsilon, TraceRoute::Auto) {
                Ok(r) => Some(r),
                Err(Error::NoConvergence(_)) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        let higher = if order >= 3 {
            let cutoffs = Cutoffs::adaptive(g, 1.0, order, DEFAULT_TAIL_TOLERANCE)?;
            Some(SeriesCoefficients::new(g, 1.0, order, cutoffs)?)
        } else {
            None
        };
        Ok(Self { dim: g.dim(), noise: g.noise, second, higher, order })
    }

    fn partial_sums(&self, gamma_t: f64) -> Result<Vec<f64>> {
        let mut sums = vec![agi_first_order(&self.noise, gamma_t, self.dim)?];
        if self.order >= 2 {
            let second = self.second.as_ref().map_or(f64::NAN, |r| second_order_value(r, gamma_t));
            sums.push(sums[0] + second);
        }
        if let Some(h) = &self.higher {
            let terms = h.series(gamma_t).terms;
            for term in &terms[2..] {
                let last = sums[sums.len() - 1];
                sums.push(last + term);
            }
        }
        Ok(sums)
    }
}

fn cmd_sweep(c: &Common, a: &SweepArgs, report: &mut Report) -> Result<()> {
    check_dims(&a.dim)?;
    let grid = parse_gamma_range(&a.gamma_t)?;
    if grid.len() < 2 {
        return Err(Error::InvalidParameter("a sweep needs at least 2 γt points".into()));
    }
    let mut columns = vec!["dim", "gate", "eta", "noise", "gamma_t", "agi_exact"];
    let order_names: Vec<String> = (1..=c.order).map(|k| format!("agi_order{k}")).collect();
    columns.extend(order_names.iter().map(String::as_str));
    if a.diagnostics {
        columns.extend(["purity", "coherence"]);
    }
    report.table.set_columns(&columns);
    for &d in &a.dim {
        for token in &a.gate {
            let gate = parse_gate(token, d, a.eta, c.seed)?;
            for &noise in &a.noise {
                let noise = NoiseSpec::new(noise.into(), d)?;
                let g = Generator::new(&gate, &noise)?;
                let series = SeriesEvaluator::new(&g, c.order, c.epsilon)?;
                let rows: Vec<Vec<Cell>> = grid
                    .par_iter()
                    .map(|&gt| {
                        let ch = g.channel(gt)?;
                        let mut row = vec![
                            Cell::Int(d as u64),
                            Cell::Text(gate.kind.label().into()),
                            eta_cell(&gate),
                            Cell::Text(noise.kind.label().into()),
                            Cell::Num(gt),
                            Cell::Num(1.0 - agf_exact(&ch)),
                        ];
                        row.extend(series.partial_sums(gt)?.into_iter().map(Cell::Num));
                        if a.diagnostics {
                            let diag = evolve_diagnostics(&ch, a.n_states, c.seed)?;
                            row.push(Cell::Num(diag.mean_purity));
                            row.push(Cell::Num(diag.mean_coherence));
                        }
                        Ok(row)
                    })
                    .collect::<Result<_>>()?;
                report.table.rows.extend(rows);
            }
        }
    }
    Ok(())
}

fn cmd_plateau(c: &Common, a: &PlateauArgs, report: &mut Report) -> Result<()> {
    check_dims(&a.dim)?;
    let grid = parse_gamma_range(&a.gamma_t)?;
    if grid.len() < 3 {
        return Err(Error::InvalidParameter("a plateau sweep needs at least 3 γt points".into()));
    }
    report.table.set_columns(&[
        "dim",
        "gate",
        "eta",
        "noise",
        "index",
        "seed",
        "plateau",
        "classification",
        "overshoot_height",
        "saturation_point",
        "ambiguous",
    ]);
    let mut summaries = Vec::new();
    let mut rejected = Vec::new();
    for &d in &a.dim {
        let noise = NoiseSpec::new(a.noise.into(), d)?;
        let mut records: Vec<GateRecord> = Vec::new();
        for token in &a.gate {
            if token.trim().eq_ignore_ascii_case("haar") {
                let dist = plateau_distribution_on(d, a.n_gates, &noise, c.seed, &grid, c.epsilon)?;
                records.extend(dist.records);
                continue;
            }
            let gate = parse_gate(token, d, a.eta, c.seed)?;
            let curve = sweep_generator(&Generator::new(&gate, &noise)?, &grid)?;
            let saturation = if curve.converged { saturation_point(&curve, c.epsilon).ok() } else { None };
            records.push(GateRecord {
                index: records.len(),
                gate,
                plateau: curve.plateau,
                classification: curve.classification,
                overshoot_height: curve.overshoot_height,
                saturation,
                ambiguous: curve.ambiguous,
                converged: curve.converged,
            });
        }
        let accepted: Vec<&GateRecord> = records.iter().filter(|r| r.converged).collect();
        for r in &records {
            let row = vec![
                Cell::Int(d as u64),
                Cell::Text(r.gate.kind.label().into()),
                eta_cell(&r.gate),
                Cell::Text(noise.kind.label().into()),
                Cell::Int(r.index as u64),
                Cell::Int(c.seed),
                Cell::Num(r.plateau),
                Cell::Text(match r.classification {
                    Some(Classification::Monotonic) => "monotonic".into(),
                    Some(Classification::Overshoot) => "overshoot".into(),
                    None => "unconverged".into(),
                }),
                r.overshoot_height.map_or(Cell::Empty, Cell::Num),
                r.saturation.map_or(Cell::Empty, Cell::Num),
                Cell::Text(r.ambiguous.to_string()),
            ];
            if r.converged {
                report.table.rows.push(row);
            } else {
                rejected.push(json!({ "dim": d, "gate": r.gate.to_string(), "plateau": r.plateau }));
            }
        }
        let n = accepted.len() as f64;
        let (lo, mean_bound, hi) = plateau_bounds(d)?;
        let (mean, std) = if accepted.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let mean = accepted.iter().map(|r| r.plateau).sum::<f64>() / n;
            let var = if accepted.len() > 1 {
                accepted.iter().map(|r| (r.plateau - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            (mean, var.sqrt())
        };
        let monotonic = accepted
            .iter()
            .filter(|r| r.classification == Some(Classification::Monotonic))
            .count() as f64;
        summaries.push(json!({
            "dim": d,
            "n_gates": records.len(),
            "rejected": records.len() - accepted.len(),
            "mean": num_value(mean),
            "std": num_value(std),
            "monotonic_fraction": num_value(monotonic / n),
            "bound_min": lo,
            "bound_mean": mean_bound,
            "bound_max": hi,
        }));
    }
    report.summary.insert("plateau".into(), Value::Array(summaries));
    report.summary.insert("rejected".into(), Value::Array(rejected));
    Ok(())
}

fn cmd_perturb(c: &Common, a: &PerturbArgs, report: &mut Report) -> Result<()> {
    check_dims(&a.dim)?;
    if let Some(t_spec) = &a.sweep_t {
        return perturb_gate_time(c, a, t_spec, report);
    }
    let grid = parse_gamma_range(&a.gamma_t)?;
    let mut columns: Vec<String> = ["dim", "gate", "eta", "noise", "gamma_t", "t", "s_epsilon", "status", "agi_exact"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    columns.extend((1..=c.order).map(|k| format!("agi_order{k}")));
    columns.extend((1..=c.order).map(|k| format!("eps{k}")));
    columns.extend(["agi_resummed".to_string(), "eps_resummed".to_string()]);
    report.table.set_columns(&columns.iter().map(String::as_str).collect::<Vec<_>>());
    for &d in &a.dim {
        let noise = NoiseSpec::new(a.noise.into(), d)?;
        for token in &a.gate {
            let gate = parse_gate(token, d, a.eta, c.seed)?;
            let g = Generator::new(&gate, &noise)?;
            let series = SeriesEvaluator::new(&g, c.order.max(2), c.epsilon)?;
            let (s_eps, status) = match &series.second {
                Some(r) => (Cell::Int(r.s_epsilon as u64), "ok"),
                None => (Cell::Empty, "unconverged"),
            };
            let rows: Vec<Vec<Cell>> = grid
                .par_iter()
                .map(|&gt| {
                    let exact = g.agi(gt)?;
                    let sums = series.partial_sums(gt)?;
                    let resummed = gate_independent_agi(&noise, gt, d)?;
                    let mut row = vec![
                        Cell::Int(d as u64),
                        Cell::Text(gate.kind.label().into()),
                        eta_cell(&gate),
                        Cell::Text(noise.kind.label().into()),
                        Cell::Num(gt),
                        Cell::Num(1.0),
                        s_eps.clone(),
                        Cell::Text(status.into()),
                        Cell::Num(exact),
                    ];
                    row.extend(sums[..c.order].iter().map(|&s| Cell::Num(s)));
                    row.extend(sums[..c.order].iter().map(|&s| Cell::Num(relative_error(gt, exact, s))));
                    row.push(Cell::Num(resummed));
                    row.push(Cell::Num(relative_error(gt, exact, resummed)));
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            report.table.rows.extend(rows);
        }
    }
    Ok(())
}

fn perturb_gate_time(c: &Common, a: &PerturbArgs, t_spec: &str, report: &mut Report) -> Result<()> {
    let ts = parse_linear_range(t_spec)?;
    if ts.iter().any(|&t| t <= 0.0) {
        return Err(Error::InvalidParameter("gate times must be positive".into()));
    }
    report
        .table
        .set_columns(&["dim", "gate", "eta", "noise", "t", "epsilon", "s_epsilon", "status"]);
    let mut fits = Vec::new();
    for &d in &a.dim {
        let noise = NoiseSpec::new(a.noise.into(), d)?;
        for token in &a.gate {
            let gate = parse_gate(token, d, a.eta, c.seed)?;
            let g = Generator::new(&gate, &noise)?;
            let cutoffs: Vec<Option<usize>> = ts
                .par_iter()
                .map(|&t| match convergence_cutoff_with(&g, t, c.epsilon, TraceRoute::Auto) {
                    Ok(r) => Ok(Some(r.s_epsilon)),
                    Err(Error::NoConvergence(_)) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect::<Result<_>>()?;
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (&t, s) in ts.iter().zip(&cutoffs) {
                report.table.rows.push(vec![
                    Cell::Int(d as u64),
                    Cell::Text(gate.kind.label().into()),
                    eta_cell(&gate),
                    Cell::Text(noise.kind.label().into()),
                    Cell::Num(t),
                    Cell::Num(c.epsilon),
                    s.map_or(Cell::Empty, |v| Cell::Int(v as u64)),
                    Cell::Text(if s.is_some() { "ok" } else { "unconverged" }.into()),
                ]);
                if let Some(s) = s {
                    xs.push(t);
                    ys.push(*s as f64);
                }
            }
            let fit = match fit_model(&xs, &ys, FitModel::Linear, None) {
                Ok(f) => json!({ "intercept": f.params[0], "slope": f.params[1], "r_squared": num_value(f.r_squared) }),
                Err(e) => json!({ "error": e.to_string() }),
            };
            fits.push(json!({ "dim": d, "gate": gate.to_string(), "fit": fit }));
        }
    }
    report.summary.insert("s_epsilon_linear_fit".into(), Value::Array(fits));
    Ok(())
}

fn cmd_haar_validate(c: &Common, a: &HaarArgs, report: &mut Report) -> Result<()> {
    check_dims(&[a.dim])?;
    if a.n_eigenvalues < a.dim || a.phase_bins < 2 || a.spacing_bins < 2 || !(a.spacing_max > 0.0) {
        return Err(Error::InvalidParameter("haar-validate needs ≥ d eigenvalues and ≥ 2 bins".into()));
    }
    let n_matrices = a.n_eigenvalues.div_ceil(a.dim);
    let sample = SpectralSample::cue(a.dim, n_matrices, c.seed)?;
    let pi = std::f64::consts::PI;
    let phases = Histogram::new(&sample.phases, -pi, pi, a.phase_bins)?;
    let spacings = unfold_spacings(&sample);
    let spacing_hist = Histogram::new(&spacings, 0.0, a.spacing_max, a.spacing_bins)?;
    let uniform = 1.0 / (2.0 * pi);
    let kl_phase = kl_divergence(&phases, |_| uniform);
    let kl_spacing = kl_divergence(&spacing_hist, wigner_surmise);
    let chi = chi_square_uniform(&phases)?;

    report
        .table
        .set_columns(&["histogram", "bin_lo", "bin_hi", "count", "density", "reference"]);
    for (name, h) in [("phase", &phases), ("spacing", &spacing_hist)] {
        for (i, (count, density)) in h.counts.iter().zip(&h.density).enumerate() {
            let center = 0.5 * (h.edges[i] + h.edges[i + 1]);
            let reference = if name == "phase" { uniform } else { wigner_surmise(center) };
            report.table.rows.push(vec![
                Cell::Text(name.into()),
                Cell::Num(h.edges[i]),
                Cell::Num(h.edges[i + 1]),
                Cell::Int(*count),
                Cell::Num(*density),
                Cell::Num(reference),
            ]);
        }
    }
    let s = &mut report.summary;
    s.insert("dim".into(), json!(a.dim));
    s.insert("n_matrices".into(), json!(n_matrices));
    s.insert("n_eigenvalues".into(), json!(sample.phases.len()));
    s.insert("n_spacings".into(), json!(spacings.len()));
    s.insert("spacings_outside_range".into(), json!(spacing_hist.outside));
    s.insert("kl_phase_uniform".into(), num_value(kl_phase));
    s.insert("kl_spacing_wigner".into(), num_value(kl_spacing));
    s.insert("chi2_statistic".into(), num_value(chi.statistic));
    s.insert("chi2_dof".into(), json!(chi.dof));
    s.insert("chi2_p_value".into(), num_value(chi.p_value));
    if a.dim < 10 {
        s.insert(
            "note".into(),
            json!("informational: the Wigner surmise approximates CUE spacings only loosely at small d"),
        );
    }
    Ok(())
}

fn cmd_fit(a: &FitArgs, report: &mut Report) -> Result<()> {
    let (xs, ys) = read_columns(&a.input, &a.x, &a.y)?;
    report.table.set_columns(&["parameter", "value"]);
    let s = &mut report.summary;
    s.insert("model".into(), serde_json::to_value(a.model).unwrap_or(Value::Null));
    s.insert("n_points".into(), json!(xs.len()));
    match fit_model(&xs, &ys, a.model, a.init.as_deref()) {
        Ok(fit) => {
            let rms = (fit.residuals.iter().map(|r| r * r).sum::<f64>() / fit.residuals.len() as f64).sqrt();
            let max_abs = fit.residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            s.insert("status".into(), json!("ok"));
            s.insert("params".into(), Value::Array(fit.params.iter().map(|&p| num_value(p)).collect()));
            s.insert("r_squared".into(), num_value(fit.r_squared));
            s.insert("residual_rms".into(), num_value(rms));
            s.insert("residual_max_abs".into(), num_value(max_abs));
            s.insert("iterations".into(), json!(fit.iterations));
            for (name, p) in param_names(a.model).iter().zip(&fit.params) {
                report.table.rows.push(vec![Cell::Text(name.to_string()), Cell::Num(*p)]);
            }
            report.table.rows.push(vec![Cell::Text("r_squared".into()), Cell::Num(fit.r_squared)]);
        }
        Err(Error::ConstantData { variance }) => {
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            s.insert("status".into(), json!("constant-dataset"));
            s.insert("value".into(), num_value(mean));
            s.insert("variance".into(), num_value(variance));
            report.table.rows.push(vec![Cell::Text("constant".into()), Cell::Num(mean)]);
        }
        Err(e) => {
            s.insert("status".into(), json!("failed"));
            s.insert("diagnostic".into(), json!(e.to_string()));
            report.failure = Some(e);
        }
    }
    Ok(())
}

fn param_names(model: FitModel) -> &'static [&'static str] {
    match model {
        FitModel::PowerLaw => &["alpha", "beta", "delta"],
        FitModel::Sigmoid => &["a0", "a1", "a2", "a3"],
        FitModel::Exponential => &["b0", "b1", "b2", "b3"],
        FitModel::Linear => &["intercept", "slope"],
    }
}

/// Two numeric columns of a CSV table, selected by header name or index;
/// rows with an empty or non-numeric cell in either column are skipped.
pub fn read_columns(path: &Path, x: &str, y: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let cfg_err = |m: String| Error::InvalidParameter(m);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| cfg_err(format!("cannot read header of {}: {e}", path.display())))?
        .clone();
    let resolve = |col: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == col)
            .or_else(|| col.parse::<usize>().ok().filter(|&i| i < headers.len()))
            .ok_or_else(|| cfg_err(format!("column '{col}' not found in {}", path.display())))
    };
    let (ix, iy) = (resolve(x)?, resolve(y)?);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| cfg_err(format!("malformed row in {}: {e}", path.display())))?;
        let parse = |i: usize| record.get(i).and_then(|v| v.parse::<f64>().ok()).filter(|v| v.is_finite());
        if let (Some(a), Some(b)) = (parse(ix), parse(iy)) {
            xs.push(a);
            ys.push(b);
        }
    }
    Ok((xs, ys))
}

#[derive(Clone, Debug)]
enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format_number(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => num_value(*v),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

/// 17 significant digits in scientific notation.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

fn num_value(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

#[derive(Default)]
struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    fn set_columns(&mut self, names: &[&str]) {
        self.columns = names.iter().map(|s| s.to_string()).collect();
    }
}

struct Report {
    command: &'static str,
    config: Value,
    seed: u64,
    table: Table,
    summary: Map<String, Value>,
    /// Error to report after the output has been written.
    failure: Option<Error>,
}

impl Report {
    fn new(command: &'static str, config: Value, seed: u64) -> Self {
        Self { command, config, seed, table: Table::default(), summary: Map::new(), failure: None }
    }

    fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# {} {}\n", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")));
        out.push_str(&format!("# command: {}\n", self.command));
        out.push_str(&format!("# config: {}\n", self.config));
        out.push_str(&format!("# seed: {}\n", self.seed));
        for (k, v) in &self.summary {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let _ = w.write_record(&self.table.columns);
        for row in &self.table.rows {
            let _ = w.write_record(row.iter().map(Cell::csv));
        }
        let body = w.into_inner().unwrap_or_default();
        out.push_str(&String::from_utf8_lossy(&body));
        out
    }

    fn to_json(&self) -> String {
        let mut data = Map::new();
        for (i, name) in self.table.columns.iter().enumerate() {
            let col: Vec<Value> = self
                .table
                .rows
                .iter()
                .map(|r| r.get(i).map_or(Value::Null, Cell::json))
                .collect();
            data.insert(name.clone(), Value::Array(col));
        }
        let doc = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "columns": self.table.columns,
            "data": data,
            "summary": self.summary,
        });
        let mut s = serde_json::to_string_pretty(&doc).unwrap_or_default();
        s.push('\n');
        s
    }
}
