//! Numerical one-point rate function `I^n(y)` of the discrete model.
//!
//! `I^n(y)` is the minimum of `(1/2)||h||^2` over controls whose skeleton
//! path hits `y` at `(T, xbar)`. We minimize over paths instead: the control
//! is recovered slab by slab from the path, so the objective is an explicit
//! function of the nodal values and the terminal constraint is linear.

pub mod gramian;
mod lbfgs;
pub mod precond;
pub mod transcription;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::SpatialGrid;
use crate::model::{Coefficients, DEFAULT_SIGMA_MIN};
use crate::numerics::par_map;
use crate::skeleton::{skeleton_forward, skeleton_inverse_with, Control, InverseOptions, SpaceTimePath};

pub use gramian::{continuum_gramian, discrete_gramian, linear_rate, midpoint_gramian};
pub use lbfgs::RunOutcome;
pub use precond::GaussNewtonPreconditioner;
pub use transcription::{Evaluation, TranscriptionProblem, BARRIER_VALUE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateOptions {
    pub max_iterations: usize,
    /// L-BFGS memory pairs.
    pub memory: usize,
    /// Stop when `sqrt(g^T H^{-1} g) < grad_tol * max(1, value)`, `H` the
    /// Gauss-Newton matrix.
    pub grad_tol: f64,
    /// Rebuild the Gauss-Newton preconditioner every this many iterations.
    pub refresh_every: usize,
    /// Try the scaled warm start and the bare deterministic start as well.
    pub multi_start: bool,
    pub sigma_min: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            memory: 20,
            grad_tol: 1e-8,
            refresh_every: 5,
            multi_start: true,
            sigma_min: DEFAULT_SIGMA_MIN,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateResult {
    pub y: f64,
    pub value: f64,
    pub path: SpaceTimePath,
    pub control: Control,
    pub iterations: usize,
    /// Gradient norm in the Gauss-Newton metric.
    pub grad_norm: f64,
    pub grad_inf: f64,
    /// `|Upsilon^n(h*)(T, xbar) - y|`.
    pub residual: f64,
    pub converged: bool,
    /// Final objective from each start, in the order warm, scaled, bare.
    pub start_values: Vec<f64>,
}

/// `Upsilon^n(0)`.
pub fn deterministic_path(coeffs: &Coefficients, n: usize, m: usize, horizon: f64) -> Result<SpaceTimePath> {
    skeleton_forward(coeffs, &Control::zeros(n, m, horizon)?)
}

fn smooth_step(s: f64) -> f64 {
    let psi = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let s = s.clamp(0.0, 1.0);
    psi(s) / (psi(s) + psi(1.0 - s))
}

/// Plateau bump: 1 within one mesh width of `kappa_n(xbar)`, smooth decay to
/// 0 over `max(pi/4, 2 pi/n)`.
pub fn tent(n: usize, xbar: f64, x: f64) -> Result<f64> {
    let grid = SpatialGrid::new(n)?;
    let centre = grid.project_kn(xbar)?;
    let h = grid.h();
    let d = (x - centre).abs() - h * (1.0 + 1e-12);
    if d <= 0.0 {
        return Ok(1.0);
    }
    let width = (PI / 4.0).max(2.0 * h);
    Ok(1.0 - smooth_step(d / width))
}

/// `base + shift (t/T) tent(x)`.
fn add_tent(base: &SpaceTimePath, xbar: f64, shift: f64) -> Result<SpaceTimePath> {
    let grid = base.grid();
    let bump: Vec<f64> = grid
        .nodes()
        .into_iter()
        .map(|x| tent(base.n, xbar, x))
        .collect::<Result<_>>()?;
    let mut out = base.clone();
    for j in 0..=base.m {
        let s = shift * base.time(j) / base.horizon;
        for k in 0..base.n {
            out.values[j * base.n + k] += s * bump[k];
        }
    }
    Ok(out)
}

fn finish(problem: &TranscriptionProblem, run: RunOutcome, start_values: Vec<f64>) -> Result<RateResult> {
    let path = problem.assemble(&run.x)?;
    let control = skeleton_inverse_with(
        &problem.coeffs,
        &path,
        &InverseOptions {
            sigma_min: problem.sigma_min,
            ..Default::default()
        },
    )?;
    let hit = skeleton_forward(&problem.coeffs, &control)?.terminal_at(problem.xbar)?;
    Ok(RateResult {
        y: problem.y,
        value: run.value,
        path,
        control,
        iterations: run.iterations,
        grad_norm: run.grad_norm,
        grad_inf: run.grad_inf,
        residual: (hit - problem.y).abs(),
        converged: run.converged,
        start_values,
    })
}

/// Run the optimizer from each start and keep the best admissible result.
fn minimize_from_starts(
    problem: &TranscriptionProblem,
    starts: &[SpaceTimePath],
    opts: &RateOptions,
) -> Result<RateResult> {
    let mut best: Option<RunOutcome> = None;
    let mut values = Vec::with_capacity(starts.len());
    for s in starts {
        let x0 = problem.extract(s)?;
        let run = lbfgs::minimize(problem, x0, opts)?;
        values.push(run.value);
        let better = match &best {
            None => true,
            Some(b) => (run.barrier, run.value) < (b.barrier, b.value),
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.ok_or_else(|| Error::InvalidArgument("no starting path".into()))?;
    finish(problem, best, values)
}

fn standard_starts(
    det: &SpaceTimePath,
    y0: f64,
    y: f64,
    xbar: f64,
    multi_start: bool,
) -> Result<Vec<SpaceTimePath>> {
    let mut starts = vec![add_tent(det, xbar, y - y0)?];
    if multi_start && (y - y0).abs() > 0.0 {
        starts.push(add_tent(det, xbar, 1.5 * (y - y0))?);
        starts.push(det.clone());
    }
    Ok(starts)
}

fn problem_for(
    coeffs: &Coefficients,
    n: usize,
    m: usize,
    horizon: f64,
    xbar: f64,
    y: f64,
    opts: &RateOptions,
) -> Result<TranscriptionProblem> {
    let mut p = TranscriptionProblem::new(coeffs, n, m, horizon, xbar, y)?;
    p.sigma_min = opts.sigma_min;
    Ok(p)
}

/// `I^n(y)` by direct transcription.
pub fn minimize_rate(
    coeffs: &Coefficients,
    n: usize,
    m: usize,
    horizon: f64,
    xbar: f64,
    y: f64,
    opts: &RateOptions,
) -> Result<RateResult> {
    let problem = problem_for(coeffs, n, m, horizon, xbar, y, opts)?;
    let det = deterministic_path(coeffs, n, m, horizon)?;
    let y0 = det.terminal_at(xbar)?;
    let starts = standard_starts(&det, y0, y, xbar, opts.multi_start)?;
    minimize_from_starts(&problem, &starts, opts)
}

#[derive(Debug)]
pub struct CurvePoint {
    pub y: f64,
    pub outcome: Result<RateResult>,
    /// `inf_{z >= y} I^n(z)` over the scanned points; 0 when `y <= y0`.
    pub tail_inf: f64,
}

impl CurvePoint {
    pub fn value(&self) -> f64 {
        self.outcome.as_ref().map(|r| r.value).unwrap_or(f64::NAN)
    }
}

#[derive(Debug)]
pub struct RateCurve {
    pub y0: f64,
    pub points: Vec<CurvePoint>,
}

/// `I^n` on a list of levels, each warm-started from the previous minimizer.
pub fn rate_curve(
    coeffs: &Coefficients,
    n: usize,
    m: usize,
    horizon: f64,
    xbar: f64,
    ys: &[f64],
    opts: &RateOptions,
) -> Result<RateCurve> {
    if ys.iter().any(|y| !y.is_finite()) {
        return invalid("rate curve levels must be finite");
    }
    let det = deterministic_path(coeffs, n, m, horizon)?;
    let y0 = det.terminal_at(xbar)?;
    let mut points: Vec<CurvePoint> = Vec::with_capacity(ys.len());
    let mut prev: Option<(f64, SpaceTimePath)> = None;
    for &y in ys {
        let outcome = (|| {
            let problem = problem_for(coeffs, n, m, horizon, xbar, y, opts)?;
            let mut starts = Vec::new();
            if let Some((yp, path)) = &prev {
                starts.push(add_tent(path, xbar, y - yp)?);
            }
            starts.extend(standard_starts(&det, y0, y, xbar, opts.multi_start && prev.is_none())?);
            minimize_from_starts(&problem, &starts, opts)
        })();
        if let Ok(r) = &outcome {
            prev = Some((y, r.path.clone()));
        }
        points.push(CurvePoint {
            y,
            outcome,
            tail_inf: f64::NAN,
        });
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].y.total_cmp(&points[b].y));
    let mut running = f64::INFINITY;
    for &i in order.iter().rev() {
        let v = points[i].value();
        if v.is_finite() {
            running = running.min(v);
        }
        points[i].tail_inf = if points[i].y <= y0 { 0.0 } else { running };
    }
    Ok(RateCurve { y0, points })
}

/// Time steps per resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MRule {
    Fixed { m: usize },
    /// `m = base_m (n / base_n)^2`, rounded up.
    Quadratic { base_n: usize, base_m: usize },
}

impl Default for MRule {
    fn default() -> Self {
        MRule::Quadratic { base_n: 8, base_m: 64 }
    }
}

impl MRule {
    pub fn steps(&self, n: usize) -> usize {
        match *self {
            MRule::Fixed { m } => m,
            MRule::Quadratic { base_n, base_m } => {
                let r = n as f64 / base_n as f64;
                (base_m as f64 * r * r).ceil().max(1.0) as usize
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub m: usize,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `|I^n - I^{n_max}|`, `NaN` if either row failed.
    pub diff_to_finest: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub y: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Differences to the finest row strictly decrease in `n`.
    pub differences_shrink: bool,
}

/// `I^n(y)` along `n_list` at a fixed `xbar`.
pub fn convergence_scan(
    coeffs: &Coefficients,
    n_list: &[usize],
    m_rule: MRule,
    horizon: f64,
    xbar: f64,
    y: f64,
    opts: &RateOptions,
) -> Result<ConvergenceReport> {
    if n_list.is_empty() {
        return invalid("empty n list");
    }
    let results = par_map(n_list.len(), |i| {
        let n = n_list[i];
        let m = m_rule.steps(n);
        (n, m, minimize_rate(coeffs, n, m, horizon, xbar, y, opts))
    });
    let mut rows: Vec<ConvergenceRow> = results
        .into_iter()
        .map(|(n, m, r)| match r {
            Ok(r) => ConvergenceRow {
                n,
                m,
                value: if r.converged { r.value } else { f64::NAN },
                iterations: r.iterations,
                converged: r.converged,
                diff_to_finest: f64::NAN,
                error: (!r.converged).then(|| "optimizer did not converge".to_string()),
            },
            Err(e) => ConvergenceRow {
                n,
                m,
                value: f64::NAN,
                iterations: 0,
                converged: false,
                diff_to_finest: f64::NAN,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let finest = rows
        .iter()
        .max_by_key(|r| r.n)
        .map(|r| (r.n, r.value))
        .unwrap_or((0, f64::NAN));
    for r in rows.iter_mut() {
        if r.n != finest.0 {
            r.diff_to_finest = (r.value - finest.1).abs();
        }
    }
    let mut coarse: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.n != finest.0).collect();
    coarse.sort_by_key(|r| r.n);
    let differences_shrink = coarse.len() >= 2
        && coarse.iter().all(|r| r.diff_to_finest.is_finite())
        && coarse.windows(2).all(|w| w[1].diff_to_finest < w[0].diff_to_finest);
    Ok(ConvergenceReport {
        y,
        rows,
        differences_shrink,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaProbe {
    pub base_n: usize,
    pub base_value: f64,
    /// `(n, m, J^n)` of the modified sequence.
    pub refinements: Vec<(usize, usize, f64)>,
    /// `max J^{n'} / J^n`.
    pub ratio: f64,
    pub passed: bool,
}

/// Refine the minimizing control of `result` onto finer grids (cells and
/// slabs nest, so the norm is unchanged), rescale it so the finer skeleton
/// hits `y` again, and evaluate the discrete action of the resulting path.
pub fn gamma_limsup_probe(
    coeffs: &Coefficients,
    result: &RateResult,
    xbar: f64,
    factors: &[usize],
    m_rule: MRule,
) -> Result<GammaProbe> {
    let base = &result.control;
    let mut refinements = Vec::new();
    for &r in factors {
        if r == 0 {
            return invalid("refinement factor must be positive");
        }
        let n = base.n * r;
        let m = m_rule.steps(n);
        let h = Control::from_fn(n, m, base.horizon, |t, x| {
            let j = ((t / base.dt()) as usize).min(base.m - 1);
            let k = ((x / (PI / base.n as f64)) as usize).min(base.n - 1);
            base.values[j * base.n + k]
        })?;
        let hit = |a: f64| -> Result<f64> { skeleton_forward(coeffs, &h.scaled(a))?.terminal_at(xbar) };
        let alpha = secant_root(|a| Ok(hit(a)? - result.y), 1.0, 1.01)?;
        let path = skeleton_forward(coeffs, &h.scaled(alpha))?;
        let problem = TranscriptionProblem::new(coeffs, n, m, base.horizon, xbar, result.y)?;
        let path = problem.assemble(&problem.extract(&path)?)?;
        let value = problem.full_value_and_gradient(&path).value;
        refinements.push((n, m, value));
    }
    let ratio = refinements
        .iter()
        .map(|r| r.2 / result.value)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(GammaProbe {
        base_n: base.n,
        base_value: result.value,
        refinements,
        ratio,
        passed: ratio <= 1.05,
    })
}

fn secant_root(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<f64> {
    let mut fa = f(a)?;
    for _ in 0..60 {
        let fb = f(b)?;
        if fb.abs() < 1e-13 || fb == fa {
            return Ok(b);
        }
        let c = b - fb * (b - a) / (fb - fa);
        a = b;
        fa = fb;
        b = c;
    }
    Err(Error::NotAdmissible("terminal rescaling did not converge".into()))
}
