//! Discrete and continuous Green functions of `d/dt + Delta^2` with Neumann
//! boundary conditions, and the mesh-refinement study of their difference.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::SpatialGrid;
use crate::numerics::{exp_integral, loglog_slope, par_map};
use crate::quadrature::{graded_rule, GaussLegendre};
use crate::spectral::{eigenvalue, phi};

/// `G^n_t(x, y) = sum_j exp(-lambda_{j,n}^2 t) Pi_n(phi_j)(x) phi_j(kappa_n(y))`.
#[derive(Debug, Clone)]
pub struct DiscreteGreen {
    grid: SpatialGrid,
    lambda: Vec<f64>,
    /// `phi_j(x_k)`, row `j`.
    phi_nodes: Vec<f64>,
}

impl DiscreteGreen {
    pub fn new(grid: SpatialGrid) -> Self {
        let n = grid.n();
        let lambda = (0..n).map(|j| eigenvalue(j, n)).collect();
        let mut phi_nodes = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                phi_nodes.push(phi(j, grid.node(k)));
            }
        }
        Self {
            grid,
            lambda,
            phi_nodes,
        }
    }

    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    fn phi_row(&self, j: usize) -> &[f64] {
        let n = self.grid.n();
        &self.phi_nodes[j * n..(j + 1) * n]
    }

    /// `phi_{j,n}(x) = Pi_n(phi_j)(x)` for all `j`.
    pub fn interpolated_modes(&self, x: f64) -> Result<Vec<f64>> {
        let w = self.grid.interpolation_weights(x)?;
        Ok((0..self.grid.n()).map(|j| w.apply(self.phi_row(j))).collect())
    }

    /// Series with term `j` scaled by `lambda_j^power`.
    fn series(&self, t: f64, x: f64, y: f64, power: i32) -> Result<f64> {
        if !(t >= 0.0) {
            return invalid(format!("Green function time must be >= 0, got {t}"));
        }
        let px = self.interpolated_modes(x)?;
        let cell = self.grid.cell_of(y)?;
        let n = self.grid.n();
        Ok((0..n)
            .map(|j| {
                let l = self.lambda[j];
                let scale = if power == 0 { 1.0 } else { l.powi(power) };
                scale * (-l * l * t).exp() * px[j] * self.phi_nodes[j * n + cell]
            })
            .sum())
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        self.series(t, x, y, 0)
    }

    /// `Delta_{n,y} G^n_t(x, y)`.
    pub fn eval_laplacian(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        self.series(t, x, y, 1)
    }

    /// `-Delta_{n,y}^2 G^n_t(x, y)`, the spectral time derivative.
    pub fn eval_time_derivative(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        Ok(-self.series(t, x, y, 2)?)
    }

    /// `int G^n_t(x, z) w(kappa_n(z)) dz` for nodal values `w`.
    pub fn apply(&self, t: f64, x: f64, w: &[f64]) -> Result<f64> {
        let n = self.grid.n();
        if w.len() != n {
            return Err(Error::GridMismatch(format!("expected {n} nodal values, got {}", w.len())));
        }
        let mut acc = 0.0;
        for (k, wk) in w.iter().enumerate() {
            acc += self.eval(t, x, self.grid.node(k))? * wk;
        }
        Ok(acc * self.grid.h())
    }
}

pub fn green_discrete(n: usize, t: f64, x: f64, y: f64) -> Result<f64> {
    DiscreteGreen::new(SpatialGrid::new(n)?).eval(t, x, y)
}

pub fn green_discrete_laplacian(n: usize, t: f64, x: f64, y: f64) -> Result<f64> {
    DiscreteGreen::new(SpatialGrid::new(n)?).eval_laplacian(t, x, y)
}

/// Truncated series `sum_{j <= J} e^{-j^4 t} phi_j(x) phi_j(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContinuousGreen {
    pub truncation: usize,
}

impl ContinuousGreen {
    pub fn new(truncation: usize) -> Self {
        Self { truncation }
    }

    fn check(t: f64, x: f64, y: f64) -> Result<()> {
        if !(t > 0.0) {
            return invalid("continuous Green function at t <= 0 is a delta distribution");
        }
        for v in [x, y] {
            if !(0.0..=PI).contains(&v) {
                return invalid(format!("{v} lies outside [0, pi]"));
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        Self::check(t, x, y)?;
        Ok((0..=self.truncation)
            .map(|j| (-((j as f64).powi(4)) * t).exp() * phi(j, x) * phi(j, y))
            .sum())
    }

    /// `Delta_y G_t(x, y)`.
    pub fn eval_laplacian(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        Self::check(t, x, y)?;
        Ok((1..=self.truncation)
            .map(|j| {
                let jf = j as f64;
                -jf * jf * (-jf.powi(4) * t).exp() * phi(j, x) * phi(j, y)
            })
            .sum())
    }

    /// `sum_{J < j <= 2J} e^{-j^4 t} (2/pi)`, bounding `|G^(J) - G^(2J)|`.
    pub fn tail_bound(&self, t: f64) -> f64 {
        (self.truncation + 1..=2 * self.truncation)
            .map(|j| (-(j as f64).powi(4) * t).exp() * 2.0 / PI)
            .sum()
    }
}

pub fn green_continuous(t: f64, x: f64, y: f64, truncation: usize) -> Result<f64> {
    ContinuousGreen::new(truncation).eval(t, x, y)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct GreenStudyOptions {
    pub horizon: f64,
    pub n_list: Vec<usize>,
    /// Continuous truncation; `None` means `8 max(n_list)`.
    pub truncation: Option<usize>,
    pub x_points: Vec<f64>,
    /// Gauss-Legendre order per time decade for the `E1` integral.
    pub time_order: usize,
    pub time_decades: usize,
    /// Gauss-Legendre points per `y` subinterval for `E1`.
    pub y_order: usize,
    /// Also compute `E1` at `3/4` of the time order and report the change.
    pub refinement_check: bool,
}

impl Default for GreenStudyOptions {
    fn default() -> Self {
        Self {
            horizon: 0.5,
            n_list: vec![8, 16, 32, 64],
            truncation: Some(512),
            x_points: default_x_points(),
            time_order: 64,
            time_decades: 14,
            y_order: 4,
            refinement_check: false,
        }
    }
}

/// Five probe points spread over the interior and one endpoint.
pub fn default_x_points() -> Vec<f64> {
    vec![0.0, 0.4, 1.0, 2.0, 2.9]
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GreenErrorRow {
    pub n: usize,
    /// `max_x int_0^T int |G^n_s - G_s|^2 dy ds`
    pub e2: f64,
    /// `max_x int_0^T int |Delta_n G^n_s - Delta G_s| dy ds`
    pub e1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GreenErrorReport {
    pub horizon: f64,
    pub truncation: usize,
    pub rows: Vec<GreenErrorRow>,
    pub slope_e2: f64,
    pub slope_e1: f64,
    /// Largest relative change of `E1` under time-rule coarsening, if checked.
    pub e1_refinement: Option<f64>,
    /// Truncation audit: `sum_{J < j <= 2J} e^{-j^4 T} (2/pi)` at the horizon.
    pub tail_bound: f64,
}

/// Exact-in-time `E2` at one `x`: the `y` integral is done by Parseval for
/// the discrete part and exact cell integrals of the cosines for the cross
/// term; the time integrals are sums of exponentials.
pub fn e2_exact(n: usize, x: f64, horizon: f64, truncation: usize) -> Result<f64> {
    let grid = SpatialGrid::new(n)?;
    let green = DiscreteGreen::new(grid);
    let p = green.interpolated_modes(x)?;
    let h = grid.h();
    let lam2: Vec<f64> = green.lambda.iter().map(|l| l * l).collect();
    let mut discrete = 0.0;
    for j in 0..n {
        discrete += p[j] * p[j] * exp_integral(2.0 * lam2[j], horizon);
    }
    let mut continuous = 0.0;
    let mut cross = 0.0;
    for i in 0..=truncation {
        let q = phi(i, x);
        let mu = (i as f64).powi(4);
        continuous += q * q * exp_integral(2.0 * mu, horizon);
        // cell integrals of phi_i
        let cells: Vec<f64> = (0..n)
            .map(|k| {
                if i == 0 {
                    h / PI.sqrt()
                } else {
                    let fi = i as f64;
                    (2.0 / PI).sqrt()
                        * (((k + 1) as f64 * fi * h).sin() - (k as f64 * fi * h).sin())
                        / fi
                }
            })
            .collect();
        for j in 0..n {
            let c: f64 = green
                .phi_row(j)
                .iter()
                .zip(&cells)
                .map(|(a, b)| a * b)
                .sum();
            if c != 0.0 {
                cross += p[j] * q * c * exp_integral(lam2[j] + mu, horizon);
            }
        }
    }
    let v = discrete + continuous - 2.0 * cross;
    if !v.is_finite() {
        return Err(Error::Quadrature(format!("E2 at n = {n}, x = {x}")));
    }
    Ok(v.max(0.0))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `E1` for all `n` at one `x` by composite quadrature. The `y` grid is
/// aligned with the cells of every `n` so the discrete factor is constant on
/// each subinterval.
fn e1_quadrature(
    n_list: &[usize],
    x: f64,
    horizon: f64,
    truncation: usize,
    time_order: usize,
    time_decades: usize,
    y_order: usize,
) -> Result<Vec<f64>> {
    let lcm = n_list.iter().fold(1usize, |a, &b| a / gcd(a, b) * b);
    let subintervals = lcm * (2 * truncation).div_ceil(lcm).max(1);
    let dy = PI / subintervals as f64;
    let gl = GaussLegendre::new(y_order);
    let mut ys = Vec::with_capacity(subintervals * y_order);
    let mut wy = Vec::with_capacity(subintervals * y_order);
    for s in 0..subintervals {
        gl.push_mapped(s as f64 * dy, (s + 1) as f64 * dy, &mut ys, &mut wy);
    }
    let npts = ys.len();
    let jf = truncation + 1;
    let mut cos_table = vec![0.0; jf * npts];
    for i in 0..jf {
        for (p, y) in ys.iter().enumerate() {
            cos_table[i * npts + p] = phi(i, *y);
        }
    }
    let (ts, wt) = graded_rule(horizon, time_decades, time_order);

    struct Disc {
        n: usize,
        lambda: Vec<f64>,
        coef: Vec<f64>,
        phi_nodes: Vec<f64>,
    }
    let discs = n_list
        .iter()
        .map(|&n| {
            let g = DiscreteGreen::new(SpatialGrid::new(n)?);
            let coef = g.interpolated_modes(x)?;
            Ok(Disc {
                n,
                lambda: g.lambda.clone(),
                coef,
                phi_nodes: g.phi_nodes.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let qx: Vec<f64> = (0..jf).map(|i| phi(i, x)).collect();

    let per_time = par_map(ts.len(), |ti| {
        let s = ts[ti];
        let mut cont = vec![0.0; npts];
        for i in 1..jf {
            let fi = i as f64;
            let decay = fi.powi(4) * s;
            if decay > 50.0 {
                break;
            }
            let c = -fi * fi * (-decay).exp() * qx[i];
            let row = &cos_table[i * npts..(i + 1) * npts];
            for (v, r) in cont.iter_mut().zip(row) {
                *v += c * r;
            }
        }
        discs
            .iter()
            .map(|d| {
                let cells: Vec<f64> = (0..d.n)
                    .map(|k| {
                        (0..d.n)
                            .map(|j| {
                                let l = d.lambda[j];
                                l * (-l * l * s).exp() * d.coef[j] * d.phi_nodes[j * d.n + k]
                            })
                            .sum()
                    })
                    .collect();
                let per_cell = subintervals / d.n * y_order;
                cont.iter()
                    .zip(&wy)
                    .enumerate()
                    .map(|(p, (c, w))| w * (cells[p / per_cell] - c).abs())
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
    });
    let mut out = vec![0.0; n_list.len()];
    for (vals, w) in per_time.iter().zip(&wt) {
        for (o, v) in out.iter_mut().zip(vals) {
            *o += w * v;
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Quadrature(format!("E1 at x = {x}")));
    }
    Ok(out)
}

/// `E2(n)` and `E1(n)`, maximized over the probe points, with log-log slopes.
pub fn green_error_study(opts: &GreenStudyOptions) -> Result<GreenErrorReport> {
    if opts.n_list.is_empty() || opts.n_list.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("n_list must be non-empty and strictly ascending");
    }
    if opts.n_list[0] < 2 {
        return invalid("n_list entries must be >= 2");
    }
    if !(opts.horizon > 0.0) || opts.x_points.is_empty() {
        return invalid("horizon must be positive and at least one x point is needed");
    }
    let truncation = opts
        .truncation
        .unwrap_or(8 * opts.n_list.last().copied().unwrap_or(1));
    let mut e2 = vec![0.0f64; opts.n_list.len()];
    let mut e1 = vec![0.0f64; opts.n_list.len()];
    let mut refinement: Option<f64> = None;
    for &x in &opts.x_points {
        for (i, &n) in opts.n_list.iter().enumerate() {
            e2[i] = e2[i].max(e2_exact(n, x, opts.horizon, truncation)?);
        }
        let fine = e1_quadrature(
            &opts.n_list,
            x,
            opts.horizon,
            truncation,
            opts.time_order,
            opts.time_decades,
            opts.y_order,
        )?;
        if opts.refinement_check {
            let coarse = e1_quadrature(
                &opts.n_list,
                x,
                opts.horizon,
                truncation,
                (opts.time_order * 3 / 4).max(2),
                opts.time_decades,
                opts.y_order,
            )?;
            let change = fine
                .iter()
                .zip(&coarse)
                .map(|(a, b)| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            refinement = Some(refinement.unwrap_or(0.0).max(change));
        }
        for (acc, v) in e1.iter_mut().zip(fine) {
            *acc = acc.max(v);
        }
    }
    let ns: Vec<f64> = opts.n_list.iter().map(|&n| n as f64).collect();
    Ok(GreenErrorReport {
        horizon: opts.horizon,
        truncation,
        slope_e2: loglog_slope(&ns, &e2),
        slope_e1: loglog_slope(&ns, &e1),
        rows: opts
            .n_list
            .iter()
            .zip(e2.iter().zip(&e1))
            .map(|(&n, (&a, &b))| GreenErrorRow { n, e2: a, e1: b })
            .collect(),
        e1_refinement: refinement,
        tail_bound: ContinuousGreen::new(truncation).tail_bound(opts.horizon),
    })
}

/// Empirical Hoelder constants of the discrete Green function.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HolderProbe {
    pub n: usize,
    /// `max int_0^t int |G^n_{t-r}(x,.) - G^n_{t-r}(y,.)|^2 / |x - y|^2`
    pub space_constant: f64,
    /// `max [int_0^s ... + int_s^t ...] / |t - s|^(3 alpha / 4)`
    pub time_constant: f64,
}

/// Sample ladders of `|x - y|` and `|t - s|` and return the largest ratios.
/// The integrals are evaluated exactly through discrete orthonormality.
pub fn green_holder_probe(n: usize, horizon: f64, alpha: f64) -> Result<HolderProbe> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid("alpha must lie in (0, 1)");
    }
    let grid = SpatialGrid::new(n)?;
    let green = DiscreteGreen::new(grid);
    let lam2: Vec<f64> = green.lambda.iter().map(|l| l * l).collect();
    let mut space = 0.0f64;
    for &x in &[0.3, 1.1, 2.0] {
        let px = green.interpolated_modes(x)?;
        for e in 1..=12 {
            let d = PI * 2f64.powi(-e);
            let y = if x + d <= PI { x + d } else { x - d };
            let py = green.interpolated_modes(y)?;
            let v: f64 = (0..n)
                .map(|j| (px[j] - py[j]).powi(2) * exp_integral(2.0 * lam2[j], horizon))
                .sum();
            space = space.max(v / (d * d));
        }
    }
    let mut time = 0.0f64;
    let expo = 0.75 * alpha;
    for &x in &[0.3, 1.1, 2.0] {
        let px = green.interpolated_modes(x)?;
        for e in 1..=16 {
            let d = horizon * 2f64.powi(-e);
            let s = horizon - d;
            let v: f64 = (0..n)
                .map(|j| {
                    let decay = -(-lam2[j] * d).exp_m1();
                    px[j] * px[j]
                        * (decay * decay * exp_integral(2.0 * lam2[j], s)
                            + exp_integral(2.0 * lam2[j], d))
                })
                .sum();
            time = time.max(v / d.powf(expo));
        }
    }
    Ok(HolderProbe {
        n,
        space_constant: space,
        time_constant: time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_is_one() {
        let g = DiscreteGreen::new(SpatialGrid::new(16).unwrap());
        let w = vec![1.0; 16];
        for t in [0.0, 0.3, 2.0] {
            assert!((g.apply(t, 1.0, &w).unwrap() - 1.0).abs() < 1e-12);
        }
        // independent oracle: fine midpoint rule in y
        let mass: f64 = (0..16 * 40)
            .map(|i| g.eval(0.3, 1.0, (i as f64 + 0.5) * PI / 640.0).unwrap() * PI / 640.0)
            .sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn time_zero_reproduces_interpolation() {
        let grid = SpatialGrid::new(10).unwrap();
        let g = DiscreteGreen::new(grid);
        let u0 = grid.sample(|x| (2.0 * x).cos() * 0.1 + x.cos());
        for x in [0.0, 0.05, 0.77, 1.5, PI] {
            let lhs = g.apply(0.0, x, &u0.values).unwrap();
            let rhs = u0.interpolate(x).unwrap();
            assert!((lhs - rhs).abs() < 1e-12, "{x}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn time_derivative_matches_finite_difference() {
        let g = DiscreteGreen::new(SpatialGrid::new(8).unwrap());
        for &(t, x, y) in &[(0.05, 0.4, 1.3), (0.2, 2.0, 2.9), (0.01, 1.0, 1.0)] {
            let dt = 1e-6;
            let fd = (g.eval(t + dt, x, y).unwrap() - g.eval(t - dt, x, y).unwrap()) / (2.0 * dt);
            let sp = g.eval_time_derivative(t, x, y).unwrap();
            assert!((fd - sp).abs() <= 1e-6 * sp.abs().max(1.0), "{fd} vs {sp}");
        }
    }

    #[test]
    fn continuous_green_basics() {
        let c = ContinuousGreen::new(64);
        assert!(c.eval(0.0, 1.0, 1.0).is_err());
        assert!((c.eval(0.1, 0.3, 2.2).unwrap() - c.eval(0.1, 2.2, 0.3).unwrap()).abs() < 1e-15);
        let gl = GaussLegendre::new(64);
        let mass: f64 = (0..32)
            .map(|k| {
                let a = k as f64 * PI / 32.0;
                gl.integrate(a, a + PI / 32.0, |y| c.eval(0.5, 1.0, y).unwrap())
            })
            .sum();
        assert!((mass - 1.0).abs() < 1e-12);
        let c2 = ContinuousGreen::new(16);
        let c4 = ContinuousGreen::new(32);
        for &(x, y) in &[(0.1, 0.1), (1.0, 2.0)] {
            let d = (c2.eval(0.1, x, y).unwrap() - c4.eval(0.1, x, y).unwrap()).abs();
            assert!(d <= c2.tail_bound(0.1) + 1e-15);
        }
    }

    /// Brute-force double-loop quadrature of `E2` at `n = 8`, `J = 64`.
    fn e2_bruteforce(n: usize, x: f64, horizon: f64, truncation: usize) -> f64 {
        let grid = SpatialGrid::new(n).unwrap();
        let disc = DiscreteGreen::new(grid);
        let cont = ContinuousGreen::new(truncation);
        let gl = GaussLegendre::new(64);
        let (ts, wt) = graded_rule(horizon, 14, 32);
        let mut ys = Vec::new();
        let mut wy = Vec::new();
        for k in 0..n {
            for sub in 0..4 {
                let a = k as f64 * grid.h() + sub as f64 * grid.h() / 4.0;
                gl.push_mapped(a, a + grid.h() / 4.0, &mut ys, &mut wy);
            }
        }
        let mut total = 0.0;
        for (t, w) in ts.iter().zip(&wt) {
            let mut inner = 0.0;
            for (y, v) in ys.iter().zip(&wy) {
                let d = disc.eval(*t, x, *y).unwrap() - cont.eval(*t, x, *y).unwrap();
                inner += v * d * d;
            }
            total += w * inner;
        }
        total
    }

    #[test]
    fn e2_matches_bruteforce_quadrature() {
        for x in [0.4, 2.0] {
            let exact = e2_exact(8, x, 0.5, 64).unwrap();
            let brute = e2_bruteforce(8, x, 0.5, 64);
            assert!(
                (exact - brute).abs() <= 1e-8 * brute,
                "x = {x}: {exact} vs {brute}"
            );
        }
    }

    #[test]
    fn study_rejects_bad_input() {
        let mut o = GreenStudyOptions {
            n_list: vec![16, 8],
            ..Default::default()
        };
        assert!(green_error_study(&o).is_err());
        o.n_list = vec![];
        assert!(green_error_study(&o).is_err());
    }

    #[test]
    fn small_study_has_decaying_errors() {
        let opts = GreenStudyOptions {
            n_list: vec![4, 8],
            truncation: Some(64),
            x_points: vec![1.0],
            time_order: 16,
            time_decades: 10,
            ..Default::default()
        };
        let r = green_error_study(&opts).unwrap();
        assert!(r.rows[1].e2 < r.rows[0].e2);
        assert!(r.rows[1].e1 < r.rows[0].e1);
    }

    #[test]
    fn holder_constants_stay_bounded() {
        let c: Vec<HolderProbe> = [8, 16, 32, 64]
            .iter()
            .map(|&n| green_holder_probe(n, 0.5, 0.9).unwrap())
            .collect();
        let s0 = c[0].space_constant;
        let t0 = c[0].time_constant;
        for p in &c {
            assert!(p.space_constant.is_finite() && p.space_constant <= 3.0 * s0);
            assert!(p.time_constant.is_finite() && p.time_constant <= 3.0 * t0);
        }
    }
}
