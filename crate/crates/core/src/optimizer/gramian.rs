//! Closed forms for the linear case `b = 0`, `sigma = 1`, `u0 = 0`: the
//! terminal variance at `xbar` and the quadratic rate `y^2 / (2 v)`.

use std::f64::consts::PI;

use crate::error::Result;
use crate::grid::SpatialGrid;
use crate::numerics::exp_integral;
use crate::spectral::{phi, SpectralBasis};

fn projections(n: usize, xbar: f64) -> Result<(SpectralBasis, Vec<f64>)> {
    let grid = SpatialGrid::new(n)?;
    let basis = SpectralBasis::new(grid);
    let w = grid.interpolation_weights(xbar)?;
    let proj = (0..n).map(|j| w.apply(basis.eigenvector(j))).collect();
    Ok((basis, proj))
}

/// `v_n(T) = (n/pi) sum_j (l . e_j)^2 int_0^T e^{-2 lambda_j^2 s} ds`,
/// `l` the interpolation weights of `Pi_n` at `xbar`.
pub fn discrete_gramian(n: usize, horizon: f64, xbar: f64) -> Result<f64> {
    let (basis, proj) = projections(n, xbar)?;
    Ok(n as f64 / PI
        * proj
            .iter()
            .zip(basis.eigenvalues())
            .map(|(p, l)| p * p * exp_integral(2.0 * l * l, horizon))
            .sum::<f64>())
}

/// Same quantity for the implicit midpoint rule with `m` steps and controls
/// constant per step: mode `j` contributes `(1 - R^{2m}) / (2 mu)`,
/// `R = (1 - z/2)/(1 + z/2)`, `z = mu dt`, `mu = lambda_j^2`.
pub fn midpoint_gramian(n: usize, m: usize, horizon: f64, xbar: f64) -> Result<f64> {
    let (basis, proj) = projections(n, xbar)?;
    let dt = horizon / m as f64;
    Ok(n as f64 / PI
        * proj
            .iter()
            .zip(basis.eigenvalues())
            .map(|(p, l)| {
                let mu = l * l;
                let g = if mu * dt < 1e-14 {
                    horizon
                } else {
                    let z = mu * dt;
                    let r = (1.0 - z / 2.0) / (1.0 + z / 2.0);
                    (1.0 - r.powi(2 * m as i32)) / (2.0 * mu)
                };
                p * p * g
            })
            .sum::<f64>())
}

/// `v(T) = sum_{j <= J} phi_j(xbar)^2 int_0^T e^{-2 j^4 s} ds`.
pub fn continuum_gramian(horizon: f64, xbar: f64, truncation: usize) -> f64 {
    (0..=truncation)
        .map(|j| phi(j, xbar).powi(2) * exp_integral(2.0 * (j as f64).powi(4), horizon))
        .sum()
}

pub fn linear_rate(y: f64, variance: f64) -> f64 {
    y * y / (2.0 * variance)
}
