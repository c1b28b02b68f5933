//! Eigen-decomposition of `A_n`: eigenvalues, the orthonormal cosine
//! vectors `e_j`, transforms, the biharmonic semigroup and fractional powers.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::grid::{GridFunction, SpatialGrid};

/// `phi_j(x)`: `1/sqrt(pi)` for `j = 0`, `sqrt(2/pi) cos(j x)` otherwise.
pub fn phi(j: usize, x: f64) -> f64 {
    if j == 0 {
        1.0 / PI.sqrt()
    } else {
        (2.0 / PI).sqrt() * (j as f64 * x).cos()
    }
}

/// `c_{j,n} = sin^2(j pi / 2n) / (j pi / 2n)^2`, with `c_{0,n} = 1`.
pub fn c_factor(j: usize, n: usize) -> f64 {
    if j == 0 {
        return 1.0;
    }
    let a = j as f64 * PI / (2 * n) as f64;
    (a.sin() / a).powi(2)
}

/// `lambda_{j,n} = -j^2 c_{j,n}`.
pub fn eigenvalue(j: usize, n: usize) -> f64 {
    -((j * j) as f64) * c_factor(j, n)
}

/// `(1 - e^{-z}) / z`, with the limit 1 at `z = 0`.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - z / 2.0 + z * z / 6.0
    } else {
        -(-z).exp_m1() / z
    }
}

#[derive(Debug, Clone)]
pub struct SpectralBasis {
    grid: SpatialGrid,
    lambda: Vec<f64>,
    /// Row `j` holds `e_j`, row-major `n x n`.
    vectors: Vec<f64>,
}

impl SpectralBasis {
    pub fn new(grid: SpatialGrid) -> Self {
        let n = grid.n();
        let lambda = (0..n).map(|j| eigenvalue(j, n)).collect();
        let scale = (PI / n as f64).sqrt();
        let mut vectors = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                vectors.push(scale * phi(j, grid.node(k)));
            }
        }
        Self {
            grid,
            lambda,
            vectors,
        }
    }

    pub fn grid(&self) -> SpatialGrid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    pub fn eigenvector(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.vectors[j * n..(j + 1) * n]
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::GridMismatch(format!(
                "basis has n = {}, vector has {len} entries",
                self.n()
            )));
        }
        Ok(())
    }

    /// Coefficients `<v, e_j>` (Euclidean inner product).
    pub fn forward(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|j| self.eigenvector(j).iter().zip(v).map(|(e, x)| e * x).sum())
            .collect()
    }

    /// `sum_j c_j e_j`.
    pub fn inverse(&self, c: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n];
        for (j, cj) in c.iter().enumerate() {
            if *cj == 0.0 {
                continue;
            }
            for (o, e) in out.iter_mut().zip(self.eigenvector(j)) {
                *o += cj * e;
            }
        }
        out
    }

    /// Apply the diagonal multiplier `mult(j, lambda_j)` in the eigenbasis.
    pub fn apply_multiplier(&self, v: &[f64], mult: impl Fn(usize, f64) -> f64) -> Vec<f64> {
        let mut c = self.forward(v);
        for (j, cj) in c.iter_mut().enumerate() {
            *cj *= mult(j, self.lambda[j]);
        }
        self.inverse(&c)
    }

    /// `e^{-A_n^2 t} v`.
    pub fn semigroup_apply(&self, t: f64, v: &GridFunction) -> Result<GridFunction> {
        if !(t >= 0.0) {
            return invalid(format!("semigroup time must be >= 0, got {t}"));
        }
        self.check_len(v.values.len())?;
        Ok(GridFunction {
            grid: self.grid,
            values: self.apply_multiplier(&v.values, |_, l| (-l * l * t).exp()),
        })
    }

    /// `phi_1(A_n^2 dt) v` with `phi_1(z) = (1 - e^{-z})/z`.
    pub fn phi1_apply(&self, dt: f64, v: &GridFunction) -> Result<GridFunction> {
        if !(dt >= 0.0) {
            return invalid(format!("time step must be >= 0, got {dt}"));
        }
        self.check_len(v.values.len())?;
        Ok(GridFunction {
            grid: self.grid,
            values: self.apply_multiplier(&v.values, |_, l| phi1(l * l * dt)),
        })
    }

    /// `(-A_n)^nu v`, or `(-A_n dot)^nu v` (zero mode dropped) when `dotted`.
    pub fn fractional_power(&self, nu: f64, v: &GridFunction, dotted: bool) -> Result<GridFunction> {
        if !dotted && nu < 0.0 {
            return invalid("(-A_n)^nu with nu < 0 needs the dotted variant (zero eigenvalue)");
        }
        self.check_len(v.values.len())?;
        let values = self.apply_multiplier(&v.values, |j, l| {
            if j == 0 {
                if dotted || nu > 0.0 {
                    0.0
                } else {
                    1.0
                }
            } else {
                (-l).powf(nu)
            }
        });
        Ok(GridFunction {
            grid: self.grid,
            values,
        })
    }
}

/// `L a = (1/n) sum a_k`.
pub fn mean_operator(v: &GridFunction) -> f64 {
    v.values.iter().sum::<f64>() / v.n() as f64
}
