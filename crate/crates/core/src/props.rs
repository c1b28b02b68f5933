//! Randomized checks of the operator identities and discrete inequalities,
//! run as named suites with one row per grid size.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{apply_a, apply_discrete_laplacian, dense_a, lp_norm, SpatialGrid};
use crate::spectral::{c_factor, eigenvalue, phi, SpectralBasis};
use crate::GridFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropRow {
    pub n: usize,
    pub samples: usize,
    /// Worst error, worst violation, or largest empirical constant.
    pub statistic: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropSuite {
    pub name: String,
    /// What `statistic` measures and the pass rule.
    pub criterion: String,
    pub rows: Vec<PropRow>,
    pub passed: bool,
}

impl PropSuite {
    fn new(name: &str, criterion: &str, rows: Vec<PropRow>) -> Self {
        let passed = !rows.is_empty() && rows.iter().all(|r| r.passed);
        Self {
            name: name.into(),
            criterion: criterion.into(),
            rows,
            passed,
        }
    }

    /// Rows pass when their constant stays within `factor` of the largest
    /// constant on the coarser half of the sweep.
    fn stable(name: &str, criterion: &str, mut rows: Vec<PropRow>, factor: f64) -> Self {
        let half = rows.len().div_ceil(2);
        let base = rows[..half].iter().map(|r| r.statistic).fold(f64::NAN, f64::max);
        for r in rows.iter_mut() {
            r.passed = r.statistic.is_finite() && r.statistic <= factor * base;
        }
        Self::new(name, criterion, rows)
    }
}

const STABLE_RULE: &str = "empirical constant <= 1.25x the largest on the coarser half of n";

fn rng_for(seed: u64, suite: u64, n: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(suite << 32 | n as u64);
    rng
}

/// Mixture of rough, spiky and smooth test vectors.
fn random_vector(rng: &mut ChaCha8Rng, grid: &SpatialGrid, i: usize) -> Vec<f64> {
    let n = grid.n();
    match i % 3 {
        0 => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        1 => {
            let mut v = vec![0.0; n];
            v[rng.random_range(0..n)] = rng.sample::<f64, _>(StandardNormal);
            let c: f64 = rng.sample(StandardNormal);
            v.iter().map(|x| x + 0.1 * c).collect()
        }
        _ => {
            let coeffs: Vec<f64> = (0..6).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            grid.nodes()
                .into_iter()
                .map(|x| coeffs.iter().enumerate().map(|(j, c)| c * phi(j, x)).sum())
                .collect()
        }
    }
}

fn l2(v: &[f64]) -> f64 {
    lp_norm(v, 2.0)
}

/// `A_n e_j = lambda_{j,n} e_j` against the dense matrix, and the
/// eigenvalues against a dense symmetric eigensolve.
pub fn eigenpairs(n_list: &[usize]) -> Result<PropSuite> {
    let mut rows = Vec::new();
    for &n in n_list {
        let basis = SpectralBasis::new(SpatialGrid::new(n)?);
        let a = DMatrix::from_row_slice(n, n, &dense_a(n));
        let mut worst = 0.0f64;
        for j in 0..n {
            let e = DVector::from_column_slice(basis.eigenvector(j));
            let lam = basis.eigenvalues()[j];
            let r = &a * &e - &e * lam;
            worst = worst.max(r.amax() / (lam.abs().max(1.0) * e.amax()));
        }
        let mut dense: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
        dense.sort_by(|x, y| y.total_cmp(x));
        for (j, d) in dense.iter().enumerate() {
            worst = worst.max((d - eigenvalue(j, n)).abs() / d.abs().max(1.0));
        }
        rows.push(PropRow {
            n,
            samples: n,
            statistic: worst,
            passed: worst <= 1e-10,
        });
    }
    Ok(PropSuite::new("eigenpairs", "max relative residual <= 1e-10", rows))
}

/// `Delta_n phi_j (x) = lambda_{j,n} phi_j(kappa_n(x))` at every cell.
pub fn dnphi(n_list: &[usize]) -> Result<PropSuite> {
    let mut rows = Vec::new();
    for &n in n_list {
        let grid = SpatialGrid::new(n)?;
        let mut worst = 0.0f64;
        for j in 0..n {
            let lam = eigenvalue(j, n);
            let d = apply_discrete_laplacian(|x| phi(j, x), &grid)?;
            for k in 0..n {
                let x = grid.node(k);
                let err = (d.values[k] - lam * phi(j, x)).abs() / (1.0 + lam.abs());
                worst = worst.max(err);
            }
        }
        rows.push(PropRow {
            n,
            samples: n,
            statistic: worst,
            passed: worst <= 1e-12,
        });
    }
    Ok(PropSuite::new("dnphi", "max |Delta_n phi_j - lambda phi_j| / (1 + |lambda|) <= 1e-12", rows))
}

/// `int Delta_n u v(kappa_n) = int u(kappa_n) Delta_n v` for random nodal
/// `u`, `v`; both sides are integrated cell by cell.
pub fn integration_by_parts(n_list: &[usize], pairs: usize, seed: u64) -> Result<PropSuite> {
    let mut rows = Vec::new();
    for &n in n_list {
        let grid = SpatialGrid::new(n)?;
        let mut rng = rng_for(seed, 1, n);
        let mut worst = 0.0f64;
        for i in 0..pairs {
            let u = random_vector(&mut rng, &grid, i);
            let v = random_vector(&mut rng, &grid, i + 1);
            let as_fn = |w: &[f64]| {
                let g = GridFunction::new(grid, w.to_vec()).unwrap();
                move |x: f64| g.piecewise_constant(x).unwrap()
            };
            let du = apply_discrete_laplacian(as_fn(&u), &grid)?;
            let dv = apply_discrete_laplacian(as_fn(&v), &grid)?;
            let lhs: f64 = (0..n).map(|k| du.values[k] * v[k]).sum::<f64>() * grid.h();
            let rhs: f64 = (0..n).map(|k| u[k] * dv.values[k]).sum::<f64>() * grid.h();
            let scale = du.l2_norm() * l2(&v) + dv.l2_norm() * l2(&u);
            worst = worst.max((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE));
        }
        rows.push(PropRow {
            n,
            samples: pairs,
            statistic: worst,
            passed: worst <= 1e-12,
        });
    }
    Ok(PropSuite::new("integration_by_parts", "max relative asymmetry <= 1e-12", rows))
}

/// `||a||_inf <= sqrt(pi) ||a||_2 + ||(-A_n)^{1/2} a||_2`; statistic is the
/// largest ratio of the left side to the right side.
pub fn l2h1(n_list: &[usize], samples: usize, seed: u64) -> Result<PropSuite> {
    let mut rows = Vec::new();
    for &n in n_list {
        let grid = SpatialGrid::new(n)?;
        let basis = SpectralBasis::new(grid);
        let mut rng = rng_for(seed, 2, n);
        let mut worst = 0.0f64;
        let mut violations = 0;
        for i in 0..samples {
            let a = random_vector(&mut rng, &grid, i);
            let half = basis.apply_multiplier(&a, |_, lam| (-lam).max(0.0).sqrt());
            let lhs = lp_norm(&a, f64::INFINITY);
            let rhs = PI.sqrt() * l2(&a) + l2(&half);
            if lhs > rhs {
                violations += 1;
            }
            worst = worst.max(lhs / rhs);
        }
        rows.push(PropRow {
            n,
            samples,
            statistic: worst,
            passed: violations == 0,
        });
    }
    Ok(PropSuite::new("l2h1", "max lhs/rhs; zero violations", rows))
}

/// Empirical constant of `||a||_6 <= C ||A_n a||^{1/6} ||a||^{5/6} + C ||a||`.
pub fn l6h2(n_list: &[usize], samples: usize, seed: u64) -> Result<PropSuite> {
    let mut rows = Vec::new();
    for &n in n_list {
        let grid = SpatialGrid::new(n)?;
        let mut rng = rng_for(seed, 3, n);
        let mut aa = vec![0.0; n];
        let mut worst = 0.0f64;
        for i in 0..samples {
            let a = random_vector(&mut rng, &grid, i);
            apply_a(&a, &mut aa);
            let norm = l2(&a);
            let c = lp_norm(&a, 6.0) / (l2(&aa).powf(1.0 / 6.0) * norm.powf(5.0 / 6.0) + norm);
            worst = worst.max(c);
        }
        rows.push(PropRow {
            n,
            samples,
            statistic: worst,
            passed: true,
        });
    }
    Ok(PropSuite::stable("l6h2", STABLE_RULE, rows, 1.25))
}

/// Empirical constant of
/// `||e^{-A_n^2 t} a||_p <= (1 + C t^{-(1/2 - 1/p)/4}) ||a||_2`, `p = 6, inf`.
pub fn semigroup_interpolation(n_list: &[usize], samples: usize, seed: u64) -> Result<PropSuite> {
    let times = [1e-4, 1e-3, 1e-2, 1e-1];
    let mut rows = Vec::new();
    for &n in n_list {
        let grid = SpatialGrid::new(n)?;
        let basis = SpectralBasis::new(grid);
        let mut rng = rng_for(seed, 4, n);
        let mut worst = 0.0f64;
        for i in 0..samples {
            let a = random_vector(&mut rng, &grid, i);
            let norm = l2(&a);
            for &t in &times {
                let s = basis.apply_multiplier(&a, |_, lam| (-lam * lam * t).exp());
                for p in [6.0, f64::INFINITY] {
                    let expo = 0.25 * (0.5 - 1.0 / p);
                    let c = (lp_norm(&s, p) / norm - 1.0).max(0.0) * t.powf(expo);
                    worst = worst.max(c);
                }
            }
        }
        rows.push(PropRow {
            n,
            samples,
            statistic: worst,
            passed: true,
        });
    }
    Ok(PropSuite::stable(
        "semigroup_interpolation",
        STABLE_RULE,
        rows,
        1.25,
    ))
}

/// Empirical constant of the product rule
/// `||Delta_n(uv)|| <= K(|u|_C ||Delta_n v|| + |v|_C ||Delta_n u|| + [u]_1 [v]_1)`
/// over a fixed family of smooth random functions.
pub fn product_rule(n_list: &[usize], samples: usize, seed: u64) -> Result<PropSuite> {
    let mut rng = rng_for(seed, 5, 0);
    let family: Vec<(Vec<f64>, Vec<f64>)> = (0..samples)
        .map(|_| {
            let mut draw = || -> Vec<f64> {
                (0..8)
                    .map(|j| rng.sample::<f64, _>(StandardNormal) / (1.0 + j as f64).powi(2))
                    .collect()
            };
            (draw(), draw())
        })
        .collect();
    let eval = |c: &[f64], x: f64| -> f64 { c.iter().enumerate().map(|(j, a)| a * (j as f64 * x).cos()).sum() };
    let fine: Vec<f64> = (0..=4096).map(|i| PI * i as f64 / 4096.0).collect();
    let sup = |f: &dyn Fn(f64) -> f64| fine.iter().fold(0.0f64, |m, &x| m.max(f(x).abs()));
    let mut rows = Vec::new();
    for &n in n_list {
        let grid = SpatialGrid::new(n)?;
        let mut worst = 0.0f64;
        for (cu, cv) in &family {
            let u = |x: f64| eval(cu, x);
            let v = |x: f64| eval(cv, x);
            let du = |x: f64| -> f64 { cu.iter().enumerate().map(|(j, a)| -a * j as f64 * (j as f64 * x).sin()).sum() };
            let dv = |x: f64| -> f64 { cv.iter().enumerate().map(|(j, a)| -a * j as f64 * (j as f64 * x).sin()).sum() };
            let lhs = apply_discrete_laplacian(|x| u(x) * v(x), &grid)?.l2_norm();
            let rhs = sup(&u) * apply_discrete_laplacian(v, &grid)?.l2_norm()
                + sup(&v) * apply_discrete_laplacian(u, &grid)?.l2_norm()
                + sup(&du) * sup(&dv);
            worst = worst.max(lhs / rhs);
        }
        rows.push(PropRow {
            n,
            samples,
            statistic: worst,
            passed: true,
        });
    }
    Ok(PropSuite::stable("product_rule", STABLE_RULE, rows, 1.25))
}

/// `4/pi^2 <= c_{j,n} <= 1` and `max_j(-lambda_{j,n}) <= (n-1)^2`.
pub fn spectrum_bounds(n_list: &[usize]) -> Result<PropSuite> {
    let rows = n_list
        .iter()
        .map(|&n| {
            let c_ok = (1..n).all(|j| {
                let c = c_factor(j, n);
                (4.0 / (PI * PI) - 1e-15..=1.0 + 1e-15).contains(&c)
            });
            let top = (0..n).map(|j| -eigenvalue(j, n)).fold(0.0f64, f64::max);
            let bound = ((n - 1) * (n - 1)) as f64;
            PropRow {
                n,
                samples: n,
                statistic: top / bound.max(1.0),
                passed: c_ok && top <= bound * (1.0 + 1e-14),
            }
        })
        .collect();
    Ok(PropSuite::new("spectrum_bounds", "c_{j,n} in [4/pi^2, 1]; |A_n| / (n-1)^2 <= 1", rows))
}

/// Every suite at its default size.
pub fn run_all(seed: u64) -> Result<Vec<PropSuite>> {
    let exact = [2, 4, 8, 16, 64, 256];
    let sweep = [8, 16, 32, 64, 128, 256];
    Ok(vec![
        eigenpairs(&exact)?,
        dnphi(&exact)?,
        integration_by_parts(&exact, 100, seed)?,
        spectrum_bounds(&exact)?,
        l2h1(&sweep, 1000, seed)?,
        l6h2(&sweep, 1000, seed)?,
        semigroup_interpolation(&sweep, 200, seed)?,
        product_rule(&[8, 16, 32, 64, 128], 50, seed)?,
    ])
}
