//! Implicit midpoint step for `u' = -A^2 u + A b(u) + sigma(u) h`, shared by
//! the skeleton solver and the stochastic simulator.
//!
//! One step solves
//! `u+ - u + dt A^2 m - dt A b(m) - dt sigma(m) h - g = 0`, `m = (u + u+)/2`,
//! where `h` is an optional control evaluated at the midpoint and `g` an
//! optional explicit increment (noise, left-point control).

use nalgebra::{DMatrix, DVector};

use crate::grid::{apply_a, dense_a};
use crate::model::Coefficients;

/// LDL^T factorization of the symmetric pentadiagonal matrix `2I + dt A^2`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    d: Vec<f64>,
    /// `l1[i] = L[i][i-1]`, `l2[i] = L[i][i-2]`.
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl BandedSpd {
    /// `diag * I + dt * A_n^2`.
    pub fn shifted_biharmonic(n: usize, diag: f64, dt: f64) -> Self {
        let a = dense_a(n);
        let band = |i: usize, j: usize| -> f64 {
            let lo = i.max(j).saturating_sub(1);
            let hi = (i.min(j) + 1).min(n - 1);
            let mut s = 0.0;
            for k in lo..=hi {
                s += a[i * n + k] * a[k * n + j];
            }
            dt * s + if i == j { diag } else { 0.0 }
        };
        let mut d = vec![0.0; n];
        let mut l1 = vec![0.0; n];
        let mut l2 = vec![0.0; n];
        for i in 0..n {
            if i >= 2 {
                l2[i] = band(i, i - 2) / d[i - 2];
            }
            if i >= 1 {
                let mut v = band(i, i - 1);
                if i >= 2 {
                    v -= l2[i] * l1[i - 1] * d[i - 2];
                }
                l1[i] = v / d[i - 1];
            }
            let mut v = band(i, i);
            if i >= 1 {
                v -= l1[i] * l1[i] * d[i - 1];
            }
            if i >= 2 {
                v -= l2[i] * l2[i] * d[i - 2];
            }
            d[i] = v;
        }
        Self { d, l1, l2 }
    }

    /// Solve in place.
    pub fn solve(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 1..n {
            x[i] -= self.l1[i] * x[i - 1];
            if i >= 2 {
                x[i] -= self.l2[i] * x[i - 2];
            }
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.l1[i + 1] * x[i + 1];
            if i + 2 < n {
                x[i] -= self.l2[i + 2] * x[i + 2];
            }
        }
    }
}

/// Reusable midpoint stepper for a fixed `(n, dt)`.
#[derive(Debug, Clone)]
pub struct MidpointStepper {
    n: usize,
    dt: f64,
    factor: BandedSpd,
    rhs: Vec<f64>,
    m: Vec<f64>,
    bm: Vec<f64>,
    abm: Vec<f64>,
}

const FIXED_POINT_TOL: f64 = 1e-14;
const FIXED_POINT_MAX: usize = 200;
const NEWTON_MAX: usize = 50;

impl MidpointStepper {
    pub fn new(n: usize, dt: f64) -> Self {
        assert!(n >= 2, "dynamics need n >= 2");
        Self {
            n,
            dt,
            factor: BandedSpd::shifted_biharmonic(n, 2.0, dt),
            rhs: vec![0.0; n],
            m: vec![0.0; n],
            bm: vec![0.0; n],
            abm: vec![0.0; n],
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance `u` to `out`. On failure returns a short reason.
    pub fn step(
        &mut self,
        coeffs: &Coefficients,
        u: &[f64],
        h: Option<&[f64]>,
        g: Option<&[f64]>,
        out: &mut [f64],
    ) -> Result<(), String> {
        let n = self.n;
        // initial guess m = u
        self.m.copy_from_slice(u);
        let mut converged = false;
        let mut prev = f64::INFINITY;
        for _ in 0..FIXED_POINT_MAX {
            self.fixed_point_rhs(coeffs, u, h, g);
            self.factor.solve(&mut self.rhs);
            let mut diff = 0.0f64;
            let mut scale = 1.0f64;
            for k in 0..n {
                diff = diff.max((self.rhs[k] - self.m[k]).abs());
                scale = scale.max(self.rhs[k].abs());
            }
            std::mem::swap(&mut self.m, &mut self.rhs);
            if !diff.is_finite() {
                break;
            }
            if diff <= FIXED_POINT_TOL * scale {
                converged = true;
                break;
            }
            if diff > 0.9 * prev && diff > 1e-10 * scale {
                // not contracting; hand over to Newton
                break;
            }
            prev = diff;
        }
        if !converged {
            self.m.copy_from_slice(u);
            self.newton(coeffs, u, h, g)?;
        }
        for k in 0..n {
            out[k] = 2.0 * self.m[k] - u[k];
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err("non-finite state".into());
        }
        Ok(())
    }

    /// `rhs = 2u + dt A b(m) + dt sigma(m) h + g`.
    fn fixed_point_rhs(&mut self, c: &Coefficients, u: &[f64], h: Option<&[f64]>, g: Option<&[f64]>) {
        let dt = self.dt;
        for k in 0..self.n {
            self.bm[k] = c.b(self.m[k]);
        }
        apply_a(&self.bm, &mut self.abm);
        for k in 0..self.n {
            let mut r = 2.0 * u[k] + dt * self.abm[k];
            if let Some(h) = h {
                r += dt * c.sigma(self.m[k]) * h[k];
            }
            if let Some(g) = g {
                r += g[k];
            }
            self.rhs[k] = r;
        }
    }

    /// Newton on `F(m) = (2I + dt A^2) m - rhs(m)` with a dense LU.
    fn newton(
        &mut self,
        c: &Coefficients,
        u: &[f64],
        h: Option<&[f64]>,
        g: Option<&[f64]>,
    ) -> Result<(), String> {
        let n = self.n;
        let dt = self.dt;
        let a = DMatrix::from_row_slice(n, n, &dense_a(n));
        let base = DMatrix::<f64>::identity(n, n) * 2.0 + &a * &a * dt;
        for _ in 0..NEWTON_MAX {
            self.fixed_point_rhs(c, u, h, g);
            let mv = DVector::from_column_slice(&self.m);
            let f = &base * &mv - DVector::from_column_slice(&self.rhs);
            let fnorm = f.amax();
            let scale = mv.amax().max(1.0);
            if !fnorm.is_finite() {
                return Err("non-finite residual in Newton iteration".into());
            }
            if fnorm <= 1e-13 * scale {
                return Ok(());
            }
            let mut jac = base.clone();
            for k in 0..n {
                let bp = c.b_prime(self.m[k]);
                for i in 0..n {
                    jac[(i, k)] -= dt * a[(i, k)] * bp;
                }
                if let Some(h) = h {
                    jac[(k, k)] -= dt * c.sigma_prime(self.m[k]) * h[k];
                }
            }
            let delta = jac
                .lu()
                .solve(&f)
                .ok_or_else(|| "singular Newton Jacobian".to_string())?;
            for k in 0..n {
                self.m[k] -= delta[k];
            }
            if delta.amax() <= 1e-15 * scale {
                return Ok(());
            }
        }
        Err("implicit solve did not converge".into())
    }
}
