//! Gauss-Newton preconditioner `H = sum_j J_j^T W J_j` for the transcription
//! objective. `H` is block tridiagonal in time (blocks `n x n`), factored by
//! block LDL^T; the terminal constraint enters through a one-dimensional
//! Lagrange correction.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::transcription::TranscriptionProblem;
use crate::skeleton::SpaceTimePath;

#[derive(Debug, Clone)]
pub struct GaussNewtonPreconditioner {
    n: usize,
    m: usize,
    /// Cholesky factors of the Schur complements `D_b`.
    diag: Vec<Cholesky<f64, Dyn>>,
    /// `U_b = H_{b,b+1}`, `b = 0..m-1`.
    upper: Vec<DMatrix<f64>>,
    /// `H^{-1} c` and `c^T H^{-1} c` for the terminal constraint.
    hinv_c: Vec<f64>,
    c_hinv_c: f64,
    eliminated: usize,
}

impl GaussNewtonPreconditioner {
    /// Assemble and factor at `path`. Returns `None` if a Schur complement
    /// stays indefinite after regularization.
    pub fn new(problem: &TranscriptionProblem, path: &SpaceTimePath) -> Option<Self> {
        let n = problem.n;
        let m = problem.m;
        let w = problem.dt() * PI / n as f64;
        let blocks = problem.jacobian_blocks(path);
        // block b holds f_{b+1}
        let mut hdiag: Vec<DMatrix<f64>> = Vec::with_capacity(m);
        let mut upper: Vec<DMatrix<f64>> = Vec::with_capacity(m.saturating_sub(1));
        for b in 0..m {
            let (_, plus) = &blocks[b];
            let mut d = plus.transpose() * plus * w;
            if b + 1 < m {
                let (minus, plus_next) = &blocks[b + 1];
                d += minus.transpose() * minus * w;
                upper.push(minus.transpose() * plus_next * w);
            }
            hdiag.push(d);
        }
        let mut diag = Vec::with_capacity(m);
        for b in 0..m {
            let mut d = hdiag[b].clone();
            if b > 0 {
                let u = &upper[b - 1];
                let prev: &Cholesky<f64, Dyn> = &diag[b - 1];
                d -= u.transpose() * prev.solve(u);
            }
            diag.push(factor_regularized(d)?);
        }
        let mut pre = Self {
            n,
            m,
            diag,
            upper,
            hinv_c: Vec::new(),
            c_hinv_c: 0.0,
            eliminated: problem.eliminated_index(),
        };
        let mut c = vec![0.0; n * m];
        for &(k, wk) in problem.terminal_weights() {
            c[(m - 1) * n + k] = wk;
        }
        let hinv_c = pre.solve_full(&c);
        pre.c_hinv_c = c.iter().zip(&hinv_c).map(|(a, b)| a * b).sum();
        pre.hinv_c = hinv_c;
        Some(pre)
    }

    /// `H^{-1} g` over all `m n` variables.
    pub fn solve_full(&self, g: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(self.m);
        for b in 0..self.m {
            let mut v = DVector::from_column_slice(&g[b * n..(b + 1) * n]);
            if b > 0 {
                let t = self.diag[b - 1].solve(&y[b - 1]);
                v -= self.upper[b - 1].transpose() * t;
            }
            y.push(v);
        }
        let mut x = vec![DVector::zeros(n); self.m];
        for b in (0..self.m).rev() {
            let mut v = y[b].clone();
            if b + 1 < self.m {
                v -= &self.upper[b] * &x[b + 1];
            }
            x[b] = self.diag[b].solve(&v);
        }
        x.iter().flat_map(|v| v.iter().copied()).collect()
    }

    /// Reduced solve on the free variables: `z = H^{-1}(g - mu c)` with
    /// `c^T z = 0`, restricted to the free indices.
    pub fn apply(&self, g_free: &[f64]) -> Vec<f64> {
        let e = self.eliminated;
        let mut g = Vec::with_capacity(g_free.len() + 1);
        g.extend_from_slice(&g_free[..e]);
        g.push(0.0);
        g.extend_from_slice(&g_free[e..]);
        let z = self.solve_full(&g);
        let mu = if self.c_hinv_c > 0.0 {
            let ctz: f64 = self
                .hinv_c
                .iter()
                .zip(&g)
                .map(|(a, b)| a * b)
                .sum();
            ctz / self.c_hinv_c
        } else {
            0.0
        };
        let mut out = Vec::with_capacity(g_free.len());
        for (i, (zi, hc)) in z.iter().zip(&self.hinv_c).enumerate() {
            if i != e {
                out.push(zi - mu * hc);
            }
        }
        out
    }
}

fn factor_regularized(mut d: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let n = d.nrows();
    let d = {
        d = (&d + d.transpose()) * 0.5;
        d
    };
    let scale = (0..n).map(|i| d[(i, i)].abs()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let mut shift = 0.0;
    for _ in 0..12 {
        let mut t = d.clone();
        for i in 0..n {
            t[(i, i)] += shift;
        }
        if let Some(c) = t.cholesky() {
            return Some(c);
        }
        shift = if shift == 0.0 { 1e-12 * scale } else { shift * 100.0 };
    }
    None
}
