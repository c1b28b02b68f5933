//! Sample paths of the `n`-dimensional small-noise system
//! `dU + A^2 U dt = A B(U) dt + sqrt(eps n / pi) Sigma(U) dW`, plain and
//! controlled, with Girsanov weights for importance sampling.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::SpatialGrid;
use crate::integrator::MidpointStepper;
use crate::model::Coefficients;
use crate::skeleton::{Control, SpaceTimePath};

/// Brownian increments `Delta W^n_{j,k} ~ N(0, dt)`, row-major `m x n`.
///
/// Stream `path` of seed `seed` is a fixed ChaCha8 stream, so any subset of
/// paths can be regenerated independently and in any order.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrements {
    pub seed: u64,
    pub path: u64,
    pub n: usize,
    pub m: usize,
    pub horizon: f64,
    pub increments: Vec<f64>,
}

impl NoiseIncrements {
    pub fn generate(seed: u64, path: u64, n: usize, m: usize, horizon: f64) -> Result<Self> {
        if n == 0 || m == 0 || !(horizon > 0.0) {
            return invalid("noise needs n, m > 0 and a positive horizon");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        let sd = (horizon / m as f64).sqrt();
        let increments = (0..n * m)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            })
            .collect();
        Ok(Self {
            seed,
            path,
            n,
            m,
            horizon,
            increments,
        })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.m as f64
    }

    pub fn step(&self, j: usize) -> &[f64] {
        &self.increments[j * self.n..(j + 1) * self.n]
    }
}

/// A simulated path: `(m + 1) x n` nodal states.
#[derive(Debug, Clone, PartialEq)]
pub struct SdePath {
    pub eps: f64,
    pub path: SpaceTimePath,
    /// Running maximum of `|U|` over the path.
    pub max_abs: f64,
}

impl SdePath {
    pub fn times(&self) -> Vec<f64> {
        (0..=self.path.m).map(|j| self.path.time(j)).collect()
    }

    pub fn terminal(&self) -> &[f64] {
        self.path.terminal()
    }

    /// `u^{eps,n}(t_j, x)` via `Pi_n`.
    pub fn field(&self, j: usize, x: f64) -> Result<f64> {
        self.path.grid().interpolate_pn(self.path.slice(j), x)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eps) {
        return invalid(format!("eps must lie in [0, 1], got {eps}"));
    }
    Ok(())
}

/// Shared time loop; `record` keeps every slice, otherwise only the last.
fn integrate(
    coeffs: &Coefficients,
    eps: f64,
    noise: &NoiseIncrements,
    control: Option<&Control>,
    record: bool,
) -> Result<(Vec<f64>, f64)> {
    let n = noise.n;
    if n < 2 {
        return invalid("dynamics need n >= 2");
    }
    check_eps(eps)?;
    if let Some(c) = control {
        if c.n != n || c.m != noise.m || (c.horizon - noise.horizon).abs() > 1e-12 * noise.horizon {
            return Err(Error::GridMismatch(
                "control and noise must share the (n, m, T) grid".into(),
            ));
        }
    }
    let grid = SpatialGrid::new(n)?;
    let dt = noise.dt();
    let amp = (eps * n as f64 / PI).sqrt();
    let mut stepper = MidpointStepper::new(n, dt);
    let mut cur: Vec<f64> = grid.nodes().into_iter().map(|x| coeffs.u0(x)).collect();
    let mut max_abs = cur.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = if record {
        Vec::with_capacity(n * (noise.m + 1))
    } else {
        Vec::new()
    };
    if record {
        out.extend_from_slice(&cur);
    }
    let mut next = vec![0.0; n];
    let mut g = vec![0.0; n];
    for j in 0..noise.m {
        let dw = noise.step(j);
        // eps = 0 integrates the skeleton: control at the slab midpoint
        let implicit_h = if eps == 0.0 { control.map(|c| c.slab(j)) } else { None };
        let explicit_h = if eps == 0.0 { None } else { control.map(|c| c.slab(j)) };
        let mut any = false;
        if eps > 0.0 || explicit_h.is_some() {
            for k in 0..n {
                let mut v = amp * dw[k];
                if let Some(h) = explicit_h {
                    v += dt * h[k];
                }
                g[k] = coeffs.sigma(cur[k]) * v;
            }
            any = true;
        }
        stepper
            .step(coeffs, &cur, implicit_h, any.then_some(&g[..]), &mut next)
            .map_err(|reason| Error::Stiffness {
                step: j,
                time: j as f64 * dt,
                reason,
                suggested_m: 2 * noise.m,
            })?;
        std::mem::swap(&mut cur, &mut next);
        max_abs = cur.iter().fold(max_abs, |m, v| m.max(v.abs()));
        if record {
            out.extend_from_slice(&cur);
        }
    }
    if !record {
        out = cur;
    }
    Ok((out, max_abs))
}

/// Midpoint-implicit drift, left-point (Ito) noise.
pub fn simulate_path(coeffs: &Coefficients, eps: f64, noise: &NoiseIncrements) -> Result<SdePath> {
    let (values, max_abs) = integrate(coeffs, eps, noise, None, true)?;
    Ok(SdePath {
        eps,
        path: SpaceTimePath::new(noise.n, noise.m, noise.horizon, values)?,
        max_abs,
    })
}

/// Adds the drift `Sigma(U) h` (control cell values `h`). For `eps > 0` the
/// control enters at the left point together with the noise, so the tilt is
/// exactly a shift of the Gaussian increments; for `eps = 0` it is evaluated
/// at the slab midpoint and the output is the skeleton path.
pub fn simulate_controlled_path(
    coeffs: &Coefficients,
    eps: f64,
    noise: &NoiseIncrements,
    control: &Control,
) -> Result<SdePath> {
    let (values, max_abs) = integrate(coeffs, eps, noise, Some(control), true)?;
    Ok(SdePath {
        eps,
        path: SpaceTimePath::new(noise.n, noise.m, noise.horizon, values)?,
        max_abs,
    })
}

/// Terminal state only, without storing the path.
pub fn simulate_terminal(
    coeffs: &Coefficients,
    eps: f64,
    noise: &NoiseIncrements,
    control: Option<&Control>,
) -> Result<Vec<f64>> {
    Ok(integrate(coeffs, eps, noise, control, false)?.0)
}

/// Log of the likelihood ratio `dP/dQ` for a path driven by `noise` under
/// the tilted measure: `-(1/sqrt eps) sum <q_j, dW_j> - ||q||^2 / (2 eps)`,
/// `q = theta^{-1}(h)`.
pub fn girsanov_log_weight(noise: &NoiseIncrements, control: &Control, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return invalid("Girsanov weight needs eps > 0");
    }
    if control.n != noise.n || control.m != noise.m {
        return Err(Error::GridMismatch(
            "control and noise must share the (n, m) grid".into(),
        ));
    }
    let q = control.unlift();
    let cross: f64 = q.iter().zip(&noise.increments).map(|(a, b)| a * b).sum();
    Ok(-cross / eps.sqrt() - control.norm_sq() / (2.0 * eps))
}

pub fn girsanov_weight(noise: &NoiseIncrements, control: &Control, eps: f64) -> Result<f64> {
    Ok(girsanov_log_weight(noise, control, eps)?.exp())
}

/// Summary of a simulation run for the CLI.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PathSummary {
    pub path: u64,
    pub terminal_at_xbar: f64,
    pub max_abs: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientSpec, DiffusionSpec, DriftSpec, InitialSpec};
    use crate::skeleton::skeleton_forward;
    use crate::spectral::SpectralBasis;

    fn linear() -> Coefficients {
        CoefficientSpec::linear_gaussian().build().unwrap()
    }

    #[test]
    fn increments_are_reproducible_and_independent_of_order() {
        let a = NoiseIncrements::generate(7, 3, 4, 10, 1.0).unwrap();
        let b = NoiseIncrements::generate(7, 3, 4, 10, 1.0).unwrap();
        let c = NoiseIncrements::generate(7, 4, 4, 10, 1.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn increment_covariance_is_dt_identity() {
        let (n, m, t) = (3, 1, 0.25);
        let paths = 20000;
        let mut cov = [[0.0; 3]; 3];
        for p in 0..paths {
            let w = NoiseIncrements::generate(1, p, n, m, t).unwrap();
            for i in 0..n {
                for j in 0..n {
                    cov[i][j] += w.increments[i] * w.increments[j];
                }
            }
        }
        // chi-square style check: each entry within 5 standard errors
        for i in 0..n {
            for j in 0..n {
                let est = cov[i][j] / paths as f64;
                let want = if i == j { t } else { 0.0 };
                let se = t * if i == j { 2f64.sqrt() } else { 1.0 } / (paths as f64).sqrt();
                assert!((est - want).abs() < 5.0 * se, "({i},{j}): {est}");
            }
        }
    }

    #[test]
    fn deterministic_linear_flow_is_modal() {
        let n = 8;
        let coeffs = CoefficientSpec {
            drift: DriftSpec::Zero,
            diffusion: DiffusionSpec::One,
            initial: InitialSpec::Cos {
                k: 2,
                amplitude: 1.0,
                offset: 0.0,
            },
        }
        .build()
        .unwrap();
        let noise = NoiseIncrements::generate(0, 0, n, 50, 0.1).unwrap();
        let p = simulate_path(&coeffs, 0.0, &noise).unwrap();
        let l = SpectralBasis::new(SpatialGrid::new(n).unwrap()).eigenvalues()[2];
        let z = l * l * 0.1 / 50.0;
        let r = (1.0 - z / 2.0) / (1.0 + z / 2.0);
        let g = SpatialGrid::new(n).unwrap();
        for j in [0, 10, 50] {
            for k in 0..n {
                let want = r.powi(j as i32) * (2.0 * g.node(k)).cos();
                assert!((p.path.slice(j)[k] - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn constants_stay_constant_without_noise() {
        let coeffs = CoefficientSpec {
            drift: DriftSpec::Cubic,
            diffusion: DiffusionSpec::One,
            initial: InitialSpec::Constant { c: 0.7 },
        }
        .build()
        .unwrap();
        let noise = NoiseIncrements::generate(0, 0, 6, 30, 1.0).unwrap();
        let p = simulate_path(&coeffs, 0.0, &noise).unwrap();
        assert!(p.path.values.iter().all(|v| (v - 0.7).abs() < 1e-14));
    }

    #[test]
    fn zero_control_is_bitwise_identical() {
        let coeffs = CoefficientSpec::default().build().unwrap();
        let noise = NoiseIncrements::generate(3, 1, 8, 40, 0.5).unwrap();
        let a = simulate_path(&coeffs, 0.3, &noise).unwrap();
        let b = simulate_controlled_path(&coeffs, 0.3, &noise, &Control::zeros(8, 40, 0.5).unwrap()).unwrap();
        assert_eq!(a.path.values, b.path.values);
    }

    #[test]
    fn noiseless_controlled_path_is_the_skeleton() {
        let coeffs = CoefficientSpec {
            diffusion: DiffusionSpec::ShiftedSine { c: 2.0 },
            ..Default::default()
        }
        .build()
        .unwrap();
        let (n, m, t) = (8, 512, 0.5);
        let h = Control::from_fn(n, m, t, |s, x| (2.0 * s).cos() + 0.3 * x).unwrap();
        let noise = NoiseIncrements::generate(0, 0, n, m, t).unwrap();
        let a = simulate_controlled_path(&coeffs, 0.0, &noise, &h).unwrap();
        let b = skeleton_forward(&coeffs, &h).unwrap();
        let err = a.path.values.iter().zip(&b.values).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn constant_control_moves_the_mean_linearly() {
        let (n, m, t, c) = (8, 20, 0.7, 1.3);
        let noise = NoiseIncrements::generate(0, 0, n, m, t).unwrap();
        let h = Control::new(n, m, t, vec![c; n * m]).unwrap();
        let p = simulate_controlled_path(&linear(), 0.0, &noise, &h).unwrap();
        let mean = p.terminal().iter().sum::<f64>() / n as f64;
        assert!((mean - c * t).abs() < 1e-12);
    }

    #[test]
    fn girsanov_hand_example_and_zero_control() {
        let noise = NoiseIncrements {
            seed: 0,
            path: 0,
            n: 1,
            m: 1,
            horizon: 2.0,
            increments: vec![0.4],
        };
        let c = 0.9;
        let eps = 0.25;
        let h = Control::new(1, 1, 2.0, vec![c / PI.sqrt()]).unwrap();
        // q = sqrt(pi) h = c, ||q||^2 = c^2 T
        let w = girsanov_weight(&noise, &h, eps).unwrap();
        let want = (-c * 0.4 / eps.sqrt() - c * c * 2.0 / (2.0 * eps)).exp();
        assert!((w - want).abs() < 1e-14);
        assert_eq!(girsanov_weight(&noise, &h.scaled(0.0), eps).unwrap(), 1.0);
        assert!(girsanov_weight(&noise, &h, 0.0).is_err());
    }

    #[test]
    fn girsanov_weights_have_unit_mean() {
        let (n, m, t, eps) = (4, 8, 0.5, 0.3);
        let h = Control::from_fn(n, m, t, |s, x| s + x.cos()).unwrap();
        let samples = 10000;
        let w: Vec<f64> = (0..samples)
            .map(|p| girsanov_weight(&NoiseIncrements::generate(11, p, n, m, t).unwrap(), &h, eps).unwrap())
            .collect();
        let mean = w.iter().sum::<f64>() / samples as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
        let se = (var / samples as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "{mean} +- {se}");
    }

    #[test]
    fn smaller_noise_concentrates() {
        let coeffs = CoefficientSpec::default().build().unwrap();
        let (n, m, t) = (8, 32, 0.5);
        let det = simulate_path(&coeffs, 0.0, &NoiseIncrements::generate(0, 0, n, m, t).unwrap()).unwrap();
        let median_dist = |eps: f64| {
            let mut d: Vec<f64> = (0..100)
                .map(|p| {
                    let s = simulate_path(&coeffs, eps, &NoiseIncrements::generate(5, p, n, m, t).unwrap()).unwrap();
                    s.path.values.iter().zip(&det.path.values).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()))
                })
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            d[50]
        };
        assert!(median_dist(1e-2) < median_dist(1e-1));
    }

    #[test]
    fn rejects_bad_eps() {
        let noise = NoiseIncrements::generate(0, 0, 4, 4, 1.0).unwrap();
        assert!(simulate_path(&linear(), 1.5, &noise).is_err());
        assert!(simulate_path(&linear(), -0.1, &noise).is_err());
    }
}
