//! Controls, space-time paths, the discrete skeleton map `Upsilon^n`, its
//! inverse, and the rate functional `J^n_y`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{apply_a, apply_a2, lp_norm, SpatialGrid};
use crate::integrator::MidpointStepper;
use crate::model::{Coefficients, DEFAULT_SIGMA_MIN};

/// Space-time control, constant on `[t_j, t_{j+1}) x [(k-1)h, kh)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub n: usize,
    pub m: usize,
    pub horizon: f64,
    /// Row-major `m x n`.
    pub values: Vec<f64>,
}

impl Control {
    pub fn new(n: usize, m: usize, horizon: f64, values: Vec<f64>) -> Result<Self> {
        check_shape(n, m, horizon)?;
        if values.len() != n * m {
            return Err(Error::GridMismatch(format!(
                "control needs {} values, got {}",
                n * m,
                values.len()
            )));
        }
        Ok(Self {
            n,
            m,
            horizon,
            values,
        })
    }

    pub fn zeros(n: usize, m: usize, horizon: f64) -> Result<Self> {
        Self::new(n, m, horizon, vec![0.0; n * m])
    }

    /// Sample `h(t, x)` at slab midpoints and cell nodes.
    pub fn from_fn(n: usize, m: usize, horizon: f64, h: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_shape(n, m, horizon)?;
        let grid = SpatialGrid::new(n)?;
        let dt = horizon / m as f64;
        let mut values = Vec::with_capacity(n * m);
        for j in 0..m {
            let t = (j as f64 + 0.5) * dt;
            for k in 0..n {
                values.push(h(t, grid.node(k)));
            }
        }
        Ok(Self {
            n,
            m,
            horizon,
            values,
        })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.m as f64
    }

    pub fn slab(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    /// `||h||^2_{L^2(O_T)} = dt (pi/n) sum h^2`.
    pub fn norm_sq(&self) -> f64 {
        self.dt() * PI / self.n as f64 * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// `theta^{-1}`: per-node time series `q_k = sqrt(pi/n) h_k`.
    pub fn unlift(&self) -> Vec<f64> {
        let s = (PI / self.n as f64).sqrt();
        self.values.iter().map(|v| v * s).collect()
    }
}

fn check_shape(n: usize, m: usize, horizon: f64) -> Result<()> {
    if n == 0 || m == 0 {
        return invalid("n and m must be positive");
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return invalid(format!("horizon must be positive, got {horizon}"));
    }
    Ok(())
}

/// `theta(q)(t, x) = sqrt(n/pi) q_k(t)` on cell `k`; `q` is row-major `m x n`.
pub fn lift_control(q: &[f64], n: usize, m: usize, horizon: f64) -> Result<Control> {
    let s = (n as f64 / PI).sqrt();
    Control::new(n, m, horizon, q.iter().map(|v| v * s).collect())
}

/// `int_0^T |q(t)|^2 dt` for a time-sampled `q`.
pub fn time_series_norm_sq(q: &[f64], m: usize, horizon: f64) -> f64 {
    horizon / m as f64 * q.iter().map(|v| v * v).sum::<f64>()
}

/// A control that is piecewise constant on a refinement of the cells:
/// `subcells` pieces per cell, row-major `m x (n subcells)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FineControl {
    pub n: usize,
    pub subcells: usize,
    pub m: usize,
    pub horizon: f64,
    pub values: Vec<f64>,
}

impl FineControl {
    pub fn new(n: usize, subcells: usize, m: usize, horizon: f64, values: Vec<f64>) -> Result<Self> {
        check_shape(n, m, horizon)?;
        if subcells == 0 {
            return invalid("subcells must be positive");
        }
        if values.len() != n * subcells * m {
            return Err(Error::GridMismatch(format!(
                "fine control needs {} values, got {}",
                n * subcells * m,
                values.len()
            )));
        }
        Ok(Self {
            n,
            subcells,
            m,
            horizon,
            values,
        })
    }

    pub fn norm_sq(&self) -> f64 {
        let width = PI / (self.n * self.subcells) as f64;
        self.horizon / self.m as f64 * width * self.values.iter().map(|v| v * v).sum::<f64>()
    }
}

/// `h tilde`: cell-wise spatial average of a fine control.
pub fn average_control(h: &FineControl, n: usize) -> Result<Control> {
    let fine_cells = h.n * h.subcells;
    if n == 0 || fine_cells % n != 0 {
        return Err(Error::GridMismatch(format!(
            "{fine_cells} fine cells do not refine {n} cells"
        )));
    }
    let r = fine_cells / n;
    let mut values = Vec::with_capacity(n * h.m);
    for j in 0..h.m {
        let row = &h.values[j * fine_cells..(j + 1) * fine_cells];
        for k in 0..n {
            values.push(row[k * r..(k + 1) * r].iter().sum::<f64>() / r as f64);
        }
    }
    Control::new(n, h.m, h.horizon, values)
}

/// Nodal values on a uniform time grid; piecewise linear in `t`, `Pi_n` in `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePath {
    pub n: usize,
    pub m: usize,
    pub horizon: f64,
    /// Row-major `(m + 1) x n`.
    pub values: Vec<f64>,
}

impl SpaceTimePath {
    pub fn new(n: usize, m: usize, horizon: f64, values: Vec<f64>) -> Result<Self> {
        check_shape(n, m, horizon)?;
        if values.len() != n * (m + 1) {
            return Err(Error::GridMismatch(format!(
                "path needs {} values, got {}",
                n * (m + 1),
                values.len()
            )));
        }
        Ok(Self {
            n,
            m,
            horizon,
            values,
        })
    }

    /// Path with every slice equal to `f(t_j, x_k)`.
    pub fn from_fn(n: usize, m: usize, horizon: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_shape(n, m, horizon)?;
        let grid = SpatialGrid::new(n)?;
        let dt = horizon / m as f64;
        let mut values = Vec::with_capacity(n * (m + 1));
        for j in 0..=m {
            for k in 0..n {
                values.push(f(j as f64 * dt, grid.node(k)));
            }
        }
        Ok(Self {
            n,
            m,
            horizon,
            values,
        })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.m as f64
    }

    pub fn grid(&self) -> SpatialGrid {
        SpatialGrid::new(self.n).expect("n > 0 by construction")
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    pub fn slice(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn terminal(&self) -> &[f64] {
        self.slice(self.m)
    }

    /// `Pi_n(f(T, .))(x)`.
    pub fn terminal_at(&self, x: f64) -> Result<f64> {
        self.grid().interpolate_pn(self.terminal(), x)
    }

    /// Piecewise-linear-in-time, polygonal-in-space evaluation.
    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return invalid(format!("t = {t} outside [0, {}]", self.horizon));
        }
        let s = t / self.dt();
        let j = (s.floor() as usize).min(self.m - 1);
        let w = s - j as f64;
        let g = self.grid();
        let a = g.interpolate_pn(self.slice(j), x)?;
        let b = g.interpolate_pn(self.slice(j + 1), x)?;
        Ok((1.0 - w) * a + w * b)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Whether the initial slice equals `u0` at the nodes.
    pub fn starts_at(&self, coeffs: &Coefficients) -> bool {
        let g = self.grid();
        self.slice(0).iter().enumerate().all(|(k, v)| {
            let u = coeffs.u0(g.node(k));
            (v - u).abs() <= 1e-12 * u.abs().max(1.0)
        })
    }
}

/// Where the spatial terms of the inverse (and the forward map) are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlabRule {
    /// Time-slab midpoint `(f_j + f_{j+1})/2`: implicit midpoint forward map.
    #[default]
    Midpoint,
    /// Left end `f_j`: explicit Euler forward map. Only stable for tiny steps.
    LeftPoint,
}

fn u0_nodes(coeffs: &Coefficients, grid: &SpatialGrid) -> Vec<f64> {
    grid.nodes().into_iter().map(|x| coeffs.u0(x)).collect()
}

/// `Upsilon^n(h)` by the implicit midpoint rule.
pub fn skeleton_forward(coeffs: &Coefficients, h: &Control) -> Result<SpaceTimePath> {
    skeleton_forward_with(coeffs, h, SlabRule::Midpoint)
}

pub fn skeleton_forward_with(coeffs: &Coefficients, h: &Control, rule: SlabRule) -> Result<SpaceTimePath> {
    let n = h.n;
    if n < 2 {
        return invalid("skeleton dynamics need n >= 2");
    }
    let grid = SpatialGrid::new(n)?;
    let dt = h.dt();
    let mut values = Vec::with_capacity(n * (h.m + 1));
    values.extend(u0_nodes(coeffs, &grid));
    let stiffness = |j: usize, reason: String| Error::Stiffness {
        step: j,
        time: j as f64 * dt,
        reason,
        suggested_m: 2 * h.m,
    };
    match rule {
        SlabRule::Midpoint => {
            let mut stepper = MidpointStepper::new(n, dt);
            let mut next = vec![0.0; n];
            for j in 0..h.m {
                let cur = values[j * n..(j + 1) * n].to_vec();
                stepper
                    .step(coeffs, &cur, Some(h.slab(j)), None, &mut next)
                    .map_err(|r| stiffness(j, r))?;
                values.extend_from_slice(&next);
            }
        }
        SlabRule::LeftPoint => {
            let mut scratch = vec![0.0; n];
            let mut a2 = vec![0.0; n];
            let mut ab = vec![0.0; n];
            for j in 0..h.m {
                let cur = values[j * n..(j + 1) * n].to_vec();
                apply_a2(&cur, &mut scratch, &mut a2);
                let bv: Vec<f64> = cur.iter().map(|&v| coeffs.b(v)).collect();
                apply_a(&bv, &mut ab);
                let hs = h.slab(j);
                for k in 0..n {
                    let v = cur[k] + dt * (-a2[k] + ab[k] + coeffs.sigma(cur[k]) * hs[k]);
                    if !v.is_finite() {
                        return Err(stiffness(j, "non-finite state".into()));
                    }
                    values.push(v);
                }
            }
        }
    }
    SpaceTimePath::new(n, h.m, h.horizon, values)
}

/// `Upsilon^n` of a control given on a refinement of the cells. The forcing
/// `int G^n sigma(f(kappa_n y)) h(s, y) dy` only sees cell integrals of `h`.
pub fn skeleton_forward_fine(coeffs: &Coefficients, h: &FineControl) -> Result<SpaceTimePath> {
    let fine_cells = h.n * h.subcells;
    let width = PI / fine_cells as f64;
    let scale = h.n as f64 / PI;
    let mut values = Vec::with_capacity(h.n * h.m);
    for j in 0..h.m {
        let row = &h.values[j * fine_cells..(j + 1) * fine_cells];
        for k in 0..h.n {
            let integral: f64 = row[k * h.subcells..(k + 1) * h.subcells]
                .iter()
                .map(|v| v * width)
                .sum();
            values.push(scale * integral);
        }
    }
    skeleton_forward(coeffs, &Control::new(h.n, h.m, h.horizon, values)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseOptions {
    pub rule: SlabRule,
    pub sigma_min: f64,
}

impl Default for InverseOptions {
    fn default() -> Self {
        Self {
            rule: SlabRule::Midpoint,
            sigma_min: DEFAULT_SIGMA_MIN,
        }
    }
}

/// Numerator `(f_{j+1} - f_j)/dt + A^2 m - A b(m)` of the inverse formula on slab `j`,
/// together with the evaluation point `m`.
pub(crate) fn slab_residual(
    coeffs: &Coefficients,
    f0: &[f64],
    f1: &[f64],
    dt: f64,
    rule: SlabRule,
    mid: &mut [f64],
    out: &mut [f64],
    scratch: &mut [Vec<f64>; 3],
) {
    let n = f0.len();
    for k in 0..n {
        mid[k] = match rule {
            SlabRule::Midpoint => 0.5 * (f0[k] + f1[k]),
            SlabRule::LeftPoint => f0[k],
        };
    }
    let [s, a2, ab] = scratch;
    apply_a2(mid, s, a2);
    for k in 0..n {
        s[k] = coeffs.b(mid[k]);
    }
    apply_a(s, ab);
    for k in 0..n {
        out[k] = (f1[k] - f0[k]) / dt + a2[k] - ab[k];
    }
}

/// The unique cell-wise control with `Upsilon^n(h) = f`.
pub fn skeleton_inverse(coeffs: &Coefficients, f: &SpaceTimePath) -> Result<Control> {
    skeleton_inverse_with(coeffs, f, &InverseOptions::default())
}

pub fn skeleton_inverse_with(coeffs: &Coefficients, f: &SpaceTimePath, opts: &InverseOptions) -> Result<Control> {
    let n = f.n;
    if n < 2 {
        return invalid("skeleton dynamics need n >= 2");
    }
    if !f.starts_at(coeffs) {
        return Err(Error::NotAdmissible(
            "initial slice differs from u0 at the nodes".into(),
        ));
    }
    if f.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotAdmissible("path has non-finite values".into()));
    }
    let dt = f.dt();
    let mut mid = vec![0.0; n];
    let mut num = vec![0.0; n];
    let mut scratch = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut values = Vec::with_capacity(n * f.m);
    for j in 0..f.m {
        slab_residual(coeffs, f.slice(j), f.slice(j + 1), dt, opts.rule, &mut mid, &mut num, &mut scratch);
        for k in 0..n {
            let s = coeffs.sigma(mid[k]);
            if !(s.abs() >= opts.sigma_min) {
                return Err(Error::Nondegeneracy {
                    step: j,
                    node: k,
                    value: s.abs(),
                    floor: opts.sigma_min,
                });
            }
            values.push(num[k] / s);
        }
    }
    Control::new(n, f.m, f.horizon, values)
}

/// Terminal-constraint tolerance of the rate functional.
pub const TERMINAL_TOL: f64 = 1e-10;

/// `J^n_y(f)`: `+inf` unless `f` starts at `u0` and `Pi_n(f(T))(xbar) = y`;
/// otherwise half the squared norm of the inverse control.
pub fn rate_functional(coeffs: &Coefficients, f: &SpaceTimePath, y: f64, xbar: f64) -> Result<f64> {
    let end = f.terminal_at(xbar)?;
    if (end - y).abs() > TERMINAL_TOL * y.abs().max(1.0) || !f.starts_at(coeffs) {
        return Ok(f64::INFINITY);
    }
    Ok(0.5 * skeleton_inverse(coeffs, f)?.norm_sq())
}

/// `sup_t ||V||_{l_n^inf}` and `int ||A_n V||^2_{l_n^2} dt` (trapezoid in time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundednessRow {
    pub n: usize,
    pub sup_norm: f64,
    pub energy: f64,
}

pub fn boundedness_quantities(path: &SpaceTimePath) -> BoundednessRow {
    let n = path.n;
    let mut av = vec![0.0; n];
    let norms: Vec<f64> = (0..=path.m)
        .map(|j| {
            apply_a(path.slice(j), &mut av);
            lp_norm(&av, 2.0).powi(2)
        })
        .collect();
    let dt = path.dt();
    let energy = dt * (norms.iter().sum::<f64>() - 0.5 * (norms[0] + norms[path.m]));
    BoundednessRow {
        n,
        sup_norm: path.sup_norm(),
        energy,
    }
}

/// Cell averages of a continuum control `h(t, x)` (Gauss points per cell and
/// slab), rescaled so the discrete norm equals `norm` when given.
pub fn project_control(
    n: usize,
    m: usize,
    horizon: f64,
    h: impl Fn(f64, f64) -> f64,
    norm: Option<f64>,
) -> Result<Control> {
    check_shape(n, m, horizon)?;
    let gl = crate::quadrature::GaussLegendre::new(4);
    let dt = horizon / m as f64;
    let width = PI / n as f64;
    let mut values = Vec::with_capacity(n * m);
    for j in 0..m {
        for k in 0..n {
            let t0 = j as f64 * dt;
            let x0 = k as f64 * width;
            let v = gl.integrate(t0, t0 + dt, |t| gl.integrate(x0, x0 + width, |x| h(t, x)));
            values.push(v / (dt * width));
        }
    }
    let c = Control::new(n, m, horizon, values)?;
    Ok(match norm {
        Some(a) => {
            let cur = c.norm_sq().sqrt();
            if cur == 0.0 {
                return invalid("cannot rescale a zero control");
            }
            c.scaled(a / cur)
        }
        None => c,
    })
}

/// Uniform boundedness study: one continuum control projected to every `n`
/// with the same `L^2` norm.
pub fn boundedness_study(
    coeffs: &Coefficients,
    n_list: &[usize],
    m: usize,
    horizon: f64,
    h: impl Fn(f64, f64) -> f64 + Copy,
    norm: f64,
) -> Result<Vec<BoundednessRow>> {
    n_list
        .iter()
        .map(|&n| {
            let c = project_control(n, m, horizon, h, Some(norm))?;
            Ok(boundedness_quantities(&skeleton_forward(coeffs, &c)?))
        })
        .collect()
}

/// Largest `|f(t,x) - f(s,y)| / (|x - y| + |t - s|^beta)` over a fixed set of
/// sample pairs.
pub fn equicontinuity_modulus(path: &SpaceTimePath, beta: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    let t_max = path.horizon;
    for a in 0..6 {
        for b in 1..8 {
            let t = t_max * (0.1 + 0.15 * a as f64);
            let x = 0.2 + 0.4 * b as f64;
            for e in 1..10 {
                let d = 2f64.powi(-e);
                let s = (t - d * t_max).max(0.0);
                let y = (x + d).min(PI);
                let num = (path.eval(t, x)? - path.eval(s, y)?).abs();
                let den = (x - y).abs() + (t - s).abs().powf(beta);
                worst = worst.max(num / den);
            }
        }
    }
    Ok(worst)
}

/// `||Upsilon^n(h) - Upsilon^ref(h)||_C` on the shared time grid and a fine
/// `x` sample, for each `n` in the list.
pub fn continuum_error_study(
    coeffs: &Coefficients,
    n_list: &[usize],
    n_ref: usize,
    m: usize,
    horizon: f64,
    h: impl Fn(f64, f64) -> f64 + Copy,
) -> Result<Vec<(usize, f64)>> {
    let reference = skeleton_forward(coeffs, &project_control(n_ref, m, horizon, h, None)?)?;
    let xs: Vec<f64> = (0..=4 * n_ref).map(|i| i as f64 * PI / (4 * n_ref) as f64).collect();
    let ref_vals: Vec<Vec<f64>> = (0..=m)
        .map(|j| {
            xs.iter()
                .map(|&x| reference.grid().interpolate_pn(reference.slice(j), x))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    n_list
        .iter()
        .map(|&n| {
            let p = skeleton_forward(coeffs, &project_control(n, m, horizon, h, None)?)?;
            let g = p.grid();
            let mut err = 0.0f64;
            for (j, row) in ref_vals.iter().enumerate() {
                for (x, r) in xs.iter().zip(row) {
                    err = err.max((g.interpolate_pn(p.slice(j), *x)? - r).abs());
                }
            }
            Ok((n, err))
        })
        .collect()
}
