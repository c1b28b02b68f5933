//! Staggered grid on `[0, pi]`, nodal grid functions, the polygonal
//! interpolation `Pi_n`, the cell projection `kappa_n`, the Neumann matrix
//! `A_n` and the cell-wise discrete Laplacian `Delta_n`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Uniform staggered grid with nodes `x_k = (2k - 1) pi / (2n)`, `k = 1..n`.
///
/// Indices are zero-based in code: node `k` sits at `(2k + 1) pi / (2n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpatialGrid {
    n: usize,
}

impl SpatialGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("grid needs at least one node");
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Mesh size `pi / n`.
    pub fn h(&self) -> f64 {
        PI / self.n as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        (2 * k + 1) as f64 * PI / (2 * self.n) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.node(k)).collect()
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if !(0.0..=PI).contains(&x) {
            return invalid(format!("x = {x} lies outside [0, pi]"));
        }
        Ok(())
    }

    /// Index of the cell containing `x`; `x = pi` belongs to the last cell.
    pub fn cell_of(&self, x: f64) -> Result<usize> {
        self.check_domain(x)?;
        Ok(((x * self.n as f64 / PI).floor() as usize).min(self.n - 1))
    }

    /// `kappa_n(x)`: the node of the cell containing `x`.
    pub fn project_kn(&self, x: f64) -> Result<f64> {
        Ok(self.node(self.cell_of(x)?))
    }

    /// Nonzero weights of the polygonal interpolation `Pi_n` at `x`.
    ///
    /// One entry on the boundary plateaus `[0, x_1]` and `[x_n, pi]`, two in
    /// between. The first entry always carries the larger weight when the
    /// weights differ.
    pub fn interpolation_weights(&self, x: f64) -> Result<InterpWeights> {
        self.check_domain(x)?;
        let first = self.node(0);
        let last = self.node(self.n - 1);
        if x <= first {
            return Ok(InterpWeights::single(0));
        }
        if x >= last {
            return Ok(InterpWeights::single(self.n - 1));
        }
        let h = self.h();
        let k = (((x - first) / h).floor() as usize).min(self.n - 2);
        let s = ((x - self.node(k)) / h).clamp(0.0, 1.0);
        Ok(InterpWeights {
            entries: [(k, 1.0 - s), (k + 1, s)],
            len: 2,
        })
    }

    /// `Pi_n(w)(x)` from nodal values.
    pub fn interpolate_pn(&self, values: &[f64], x: f64) -> Result<f64> {
        if values.len() != self.n {
            return Err(Error::GridMismatch(format!(
                "expected {} nodal values, got {}",
                self.n,
                values.len()
            )));
        }
        Ok(self.interpolation_weights(x)?.apply(values))
    }

    /// Sample a function at the nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: *self,
            values: self.nodes().into_iter().map(f).collect(),
        }
    }
}

/// Sparse interpolation weights (one or two nodes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpWeights {
    entries: [(usize, f64); 2],
    len: usize,
}

impl InterpWeights {
    fn single(k: usize) -> Self {
        Self {
            entries: [(k, 1.0), (k, 0.0)],
            len: 1,
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries[..self.len]
    }

    pub fn apply(&self, values: &[f64]) -> f64 {
        self.entries().iter().map(|&(k, w)| w * values[k]).sum()
    }

    /// Node with the largest weight (>= 1/2).
    pub fn heaviest(&self) -> (usize, f64) {
        let e = self.entries();
        if e.len() == 2 && e[1].1 > e[0].1 {
            e[1]
        } else {
            e[0]
        }
    }
}

/// Nodal values of a function on a [`SpatialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: SpatialGrid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.n(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: SpatialGrid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.n()],
        }
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// Discrete `l_n^p` norm `((pi/n) sum |a_i|^p)^(1/p)`; `p = inf` gives the max.
    pub fn norm_lp(&self, p: f64) -> f64 {
        lp_norm(&self.values, p)
    }

    /// `Pi_n` extension evaluated at `x`.
    pub fn interpolate(&self, x: f64) -> Result<f64> {
        self.grid.interpolate_pn(&self.values, x)
    }

    /// Piecewise-constant extension `w(kappa_n(x))`.
    pub fn piecewise_constant(&self, x: f64) -> Result<f64> {
        Ok(self.values[self.grid.cell_of(x)?])
    }

    pub fn apply_a(&self) -> Result<GridFunction> {
        if self.n() < 2 {
            return invalid("A_n needs n >= 2");
        }
        let mut out = vec![0.0; self.n()];
        apply_a(&self.values, &mut out);
        Ok(GridFunction {
            grid: self.grid,
            values: out,
        })
    }
}

/// Discrete `l_n^p` norm of raw nodal values.
pub fn lp_norm(values: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    let w = PI / values.len() as f64;
    (w * values.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
}

/// Discrete inner product `(pi/n) sum a_i b_i`.
pub fn inner_ln(a: &[f64], b: &[f64]) -> f64 {
    PI / a.len() as f64 * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

/// `out = A_n v` with the Neumann corner rows. Requires `n >= 2`.
pub fn apply_a(v: &[f64], out: &mut [f64]) {
    let n = v.len();
    debug_assert!(n >= 2 && out.len() == n);
    let s = (n * n) as f64 / (PI * PI);
    out[0] = s * (v[1] - v[0]);
    for k in 1..n - 1 {
        out[k] = s * (v[k - 1] - 2.0 * v[k] + v[k + 1]);
    }
    out[n - 1] = s * (v[n - 2] - v[n - 1]);
}

/// `out = A_n^2 v`, the matrix square of `A_n`.
pub fn apply_a2(v: &[f64], scratch: &mut [f64], out: &mut [f64]) {
    apply_a(v, scratch);
    apply_a(scratch, out);
}

/// Dense `A_n`, row-major. Reference for tests and small solves.
pub fn dense_a(n: usize) -> Vec<f64> {
    let s = (n * n) as f64 / (PI * PI);
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        if k > 0 {
            m[k * n + k - 1] = s;
        }
        if k + 1 < n {
            m[k * n + k + 1] = s;
        }
        let neighbours = (k > 0) as usize + (k + 1 < n) as usize;
        m[k * n + k] = -(neighbours as f64) * s;
    }
    m
}

/// Piecewise-constant function on the cells of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFunction {
    pub grid: SpatialGrid,
    pub values: Vec<f64>,
}

impl CellFunction {
    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.values[self.grid.cell_of(x)?])
    }

    /// `||.||_{L^2(0, pi)}`, exact for a cell function.
    pub fn l2_norm(&self) -> f64 {
        lp_norm(&self.values, 2.0)
    }
}

/// Cell-wise discrete Neumann Laplacian `Delta_n w`, straight from the
/// three-branch definition: first cell, interior cells, last cell.
pub fn apply_discrete_laplacian(
    w: impl Fn(f64) -> f64,
    grid: &SpatialGrid,
) -> Result<CellFunction> {
    let n = grid.n();
    if n < 2 {
        return invalid("Delta_n needs n >= 2");
    }
    let h = grid.h();
    let s = 1.0 / (h * h);
    let values = (0..n)
        .map(|cell| {
            let xk = grid.node(cell);
            if cell == 0 {
                s * (w(grid.node(1)) - w(grid.node(0)))
            } else if cell == n - 1 {
                s * (w(grid.node(n - 2)) - w(grid.node(n - 1)))
            } else {
                s * (w(xk + h) - 2.0 * w(xk) + w(xk - h))
            }
        })
        .collect();
    Ok(CellFunction {
        grid: *grid,
        values,
    })
}
