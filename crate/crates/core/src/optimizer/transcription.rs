//! Direct transcription of `I^n(y) = inf J^n_y(f)` over nodal paths.
//!
//! Decision variables are `f(t_j, x_k)` for `j = 1..m`; the initial slice is
//! pinned to `u0` and the terminal constraint `Pi_n(f(T))(xbar) = y` is solved
//! for the terminal node with the largest interpolation weight.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::grid::{apply_a, dense_a, SpatialGrid};
use crate::model::{Coefficients, DEFAULT_SIGMA_MIN};
use crate::skeleton::{slab_residual, SlabRule, SpaceTimePath};

/// Objective value returned when `|sigma|` drops below the floor.
pub const BARRIER_VALUE: f64 = 1e100;

#[derive(Clone)]
pub struct TranscriptionProblem {
    pub coeffs: Coefficients,
    pub n: usize,
    pub m: usize,
    pub horizon: f64,
    pub xbar: f64,
    pub y: f64,
    pub sigma_min: f64,
    u0: Vec<f64>,
    /// `(node, weight)` of `Pi_n` at `xbar`.
    weights: Vec<(usize, f64)>,
    kstar: usize,
    wstar: f64,
}

impl std::fmt::Debug for TranscriptionProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TranscriptionProblem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("horizon", &self.horizon)
            .field("xbar", &self.xbar)
            .field("y", &self.y)
            .finish()
    }
}

/// Objective evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// `|sigma|` fell below the floor somewhere on the path.
    pub barrier: bool,
}

impl TranscriptionProblem {
    pub fn new(coeffs: &Coefficients, n: usize, m: usize, horizon: f64, xbar: f64, y: f64) -> Result<Self> {
        if n < 2 || m == 0 {
            return invalid("transcription needs n >= 2 and m >= 1");
        }
        if !(horizon > 0.0) || !y.is_finite() {
            return invalid("horizon must be positive and y finite");
        }
        let grid = SpatialGrid::new(n)?;
        let w = grid.interpolation_weights(xbar)?;
        let (kstar, wstar) = w.heaviest();
        Ok(Self {
            coeffs: coeffs.clone(),
            n,
            m,
            horizon,
            xbar,
            y,
            sigma_min: DEFAULT_SIGMA_MIN,
            u0: grid.nodes().into_iter().map(|x| coeffs.u0(x)).collect(),
            weights: w.entries().to_vec(),
            kstar,
            wstar,
        })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.m as f64
    }

    pub fn num_free(&self) -> usize {
        self.n * self.m - 1
    }

    pub fn eliminated_index(&self) -> usize {
        (self.m - 1) * self.n + self.kstar
    }

    pub fn terminal_weights(&self) -> &[(usize, f64)] {
        &self.weights
    }

    /// Solve the terminal constraint for the eliminated node, given the
    /// other terminal values.
    fn eliminated_value(&self, terminal: &[f64]) -> f64 {
        let rest: f64 = self
            .weights
            .iter()
            .filter(|(k, _)| *k != self.kstar)
            .map(|(k, w)| w * terminal[*k])
            .sum();
        (self.y - rest) / self.wstar
    }

    /// Full path `(m + 1) x n` from the free variables.
    pub fn assemble(&self, free: &[f64]) -> Result<SpaceTimePath> {
        if free.len() != self.num_free() {
            return Err(Error::GridMismatch(format!(
                "expected {} free variables, got {}",
                self.num_free(),
                free.len()
            )));
        }
        let e = self.eliminated_index();
        let mut values = Vec::with_capacity(self.n * (self.m + 1));
        values.extend_from_slice(&self.u0);
        values.extend_from_slice(&free[..e]);
        values.push(0.0);
        values.extend_from_slice(&free[e..]);
        let start = self.m * self.n;
        let v = self.eliminated_value(&values[start..]);
        values[start + self.kstar] = v;
        SpaceTimePath::new(self.n, self.m, self.horizon, values)
    }

    /// Free variables of a full path; the terminal constraint is enforced
    /// by discarding the eliminated node.
    pub fn extract(&self, path: &SpaceTimePath) -> Result<Vec<f64>> {
        if path.n != self.n || path.m != self.m {
            return Err(Error::GridMismatch("path grid differs from the problem grid".into()));
        }
        let e = self.eliminated_index();
        let body = &path.values[self.n..];
        let mut free = Vec::with_capacity(self.num_free());
        free.extend_from_slice(&body[..e]);
        free.extend_from_slice(&body[e + 1..]);
        Ok(free)
    }

    /// `(1/2) W sum r^2` and the gradient with respect to `f_1..f_m`.
    pub fn full_value_and_gradient(&self, path: &SpaceTimePath) -> Evaluation {
        let n = self.n;
        let dt = self.dt();
        let w = dt * PI / n as f64;
        let mut grad = vec![0.0; n * (self.m + 1)];
        let mut mid = vec![0.0; n];
        let mut num = vec![0.0; n];
        let mut scratch = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut v = vec![0.0; n];
        let mut av = vec![0.0; n];
        let mut a2v = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut value = 0.0;
        let mut barrier = false;
        for j in 0..self.m {
            slab_residual(
                &self.coeffs,
                path.slice(j),
                path.slice(j + 1),
                dt,
                SlabRule::Midpoint,
                &mut mid,
                &mut num,
                &mut scratch,
            );
            let mut c = vec![0.0; n];
            for k in 0..n {
                let mut s = self.coeffs.sigma(mid[k]);
                if !(s.abs() >= self.sigma_min) {
                    barrier = true;
                    s = if s < 0.0 { -self.sigma_min } else { self.sigma_min };
                }
                let r = num[k] / s;
                value += 0.5 * w * r * r;
                v[k] = w * r / s;
                c[k] = -w * r * r * self.coeffs.sigma_prime(mid[k]) / s;
            }
            apply_a(&v, &mut av);
            apply_a(&av, &mut a2v);
            for k in 0..n {
                tmp[k] = a2v[k] - self.coeffs.b_prime(mid[k]) * av[k] + c[k];
            }
            let (lo, hi) = grad.split_at_mut((j + 1) * n);
            let gj = &mut lo[j * n..];
            let gj1 = &mut hi[..n];
            for k in 0..n {
                gj1[k] += v[k] / dt + 0.5 * tmp[k];
                gj[k] += -v[k] / dt + 0.5 * tmp[k];
            }
        }
        grad.drain(..n);
        if barrier {
            value = BARRIER_VALUE.max(value);
        }
        Evaluation {
            value,
            gradient: grad,
            barrier,
        }
    }

    /// Reduce a full gradient (over `f_1..f_m`) to the free variables.
    pub fn reduce_gradient(&self, full: &[f64]) -> Vec<f64> {
        let e = self.eliminated_index();
        let ge = full[e];
        let start = (self.m - 1) * self.n;
        let mut g = Vec::with_capacity(self.num_free());
        for (i, gi) in full.iter().enumerate() {
            if i == e {
                continue;
            }
            let mut v = *gi;
            if i >= start {
                let k = i - start;
                if let Some((_, wk)) = self.weights.iter().find(|(kk, _)| *kk == k) {
                    v -= ge * wk / self.wstar;
                }
            }
            g.push(v);
        }
        g
    }

    pub fn evaluate(&self, free: &[f64]) -> Result<Evaluation> {
        let path = self.assemble(free)?;
        let full = self.full_value_and_gradient(&path);
        Ok(Evaluation {
            value: full.value,
            gradient: self.reduce_gradient(&full.gradient),
            barrier: full.barrier,
        })
    }

    /// Gauss-Newton blocks along the path: `(J^-_j, J^+_j)` for each slab,
    /// `J^+ = S^{-1}(I/dt + M/2) + C/2`, `J^- = S^{-1}(-I/dt + M/2) + C/2`,
    /// `M = A^2 - A diag(b'(mid))`.
    pub(crate) fn jacobian_blocks(&self, path: &SpaceTimePath) -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
        let n = self.n;
        let dt = self.dt();
        let a = DMatrix::from_row_slice(n, n, &dense_a(n));
        let a2 = &a * &a;
        let mut mid = vec![0.0; n];
        let mut num = vec![0.0; n];
        let mut scratch = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        (0..self.m)
            .map(|j| {
                slab_residual(
                    &self.coeffs,
                    path.slice(j),
                    path.slice(j + 1),
                    dt,
                    SlabRule::Midpoint,
                    &mut mid,
                    &mut num,
                    &mut scratch,
                );
                let mut mmat = a2.clone();
                for k in 0..n {
                    let bp = self.coeffs.b_prime(mid[k]);
                    for i in 0..n {
                        mmat[(i, k)] -= a[(i, k)] * bp;
                    }
                }
                let mut plus = mmat.clone() * 0.5;
                let mut minus = mmat * 0.5;
                for k in 0..n {
                    plus[(k, k)] += 1.0 / dt;
                    minus[(k, k)] -= 1.0 / dt;
                }
                for i in 0..n {
                    let mut s = self.coeffs.sigma(mid[i]);
                    if s.abs() < self.sigma_min {
                        s = if s < 0.0 { -self.sigma_min } else { self.sigma_min };
                    }
                    let c = -num[i] * self.coeffs.sigma_prime(mid[i]) / (s * s);
                    for k in 0..n {
                        plus[(i, k)] /= s;
                        minus[(i, k)] /= s;
                    }
                    plus[(i, i)] += 0.5 * c;
                    minus[(i, i)] += 0.5 * c;
                }
                (minus, plus)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientSpec, DiffusionSpec, DriftSpec, InitialSpec};
    use crate::skeleton::{rate_functional, skeleton_forward, Control};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    fn fd_check(coeffs: &Coefficients, n: usize, m: usize, seed: u64) -> f64 {
        let det = skeleton_forward(coeffs, &Control::zeros(n, m, 0.5).unwrap()).unwrap();
        let y = det.terminal_at(1.0).unwrap() + 0.3;
        let p = TranscriptionProblem::new(coeffs, n, m, 0.5, 1.0, y).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = p.extract(&det).unwrap();
        for v in x.iter_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
        let g = p.evaluate(&x).unwrap().gradient;
        let mut fd = vec![0.0; x.len()];
        for i in 0..x.len() {
            let h = 1e-6 * x[i].abs().max(1.0);
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            fd[i] = (p.evaluate(&xp).unwrap().value - p.evaluate(&xm).unwrap().value) / (2.0 * h);
        }
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        max_abs(&diff) / max_abs(&fd)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let cubic = CoefficientSpec::default().build().unwrap();
        let sine = CoefficientSpec {
            diffusion: DiffusionSpec::ShiftedSine { c: 2.0 },
            ..Default::default()
        }
        .build()
        .unwrap();
        for seed in 0..3 {
            assert!(fd_check(&cubic, 4, 8, seed) < 1e-5);
            assert!(fd_check(&sine, 4, 8, seed) < 1e-5);
        }
    }

    #[test]
    fn value_is_the_rate_functional() {
        let coeffs = CoefficientSpec::default().build().unwrap();
        let h = Control::from_fn(6, 20, 0.5, |t, x| t * x.sin()).unwrap();
        let f = skeleton_forward(&coeffs, &h).unwrap();
        let y = f.terminal_at(0.7).unwrap();
        let p = TranscriptionProblem::new(&coeffs, 6, 20, 0.5, 0.7, y).unwrap();
        let x = p.extract(&f).unwrap();
        let back = p.assemble(&x).unwrap();
        assert!((back.terminal_at(0.7).unwrap() - y).abs() < 1e-14);
        let v = p.evaluate(&x).unwrap().value;
        let j = rate_functional(&coeffs, &back, y, 0.7).unwrap();
        assert!((v - j).abs() < 1e-12 * j.max(1.0));
        assert!((v - 0.5 * h.norm_sq()).abs() < 1e-9);
    }

    #[test]
    fn deterministic_path_is_stationary() {
        let coeffs = CoefficientSpec::default().build().unwrap();
        let det = skeleton_forward(&coeffs, &Control::zeros(8, 16, 0.5).unwrap()).unwrap();
        let y0 = det.terminal_at(1.0).unwrap();
        let p = TranscriptionProblem::new(&coeffs, 8, 16, 0.5, 1.0, y0).unwrap();
        let e = p.evaluate(&p.extract(&det).unwrap()).unwrap();
        assert!(e.value < 1e-24);
        assert!(max_abs(&e.gradient) < 1e-12);
    }

    #[test]
    fn ramp_family_derivative() {
        // f_d(t) = c + d t, sigma = 1, default b: J = d^2 T pi / 2
        let c0 = 0.1;
        let coeffs = CoefficientSpec {
            drift: DriftSpec::Cubic,
            diffusion: DiffusionSpec::One,
            initial: InitialSpec::Constant { c: c0 },
        }
        .build()
        .unwrap();
        let (d, t) = (0.6, 0.5);
        let f = SpaceTimePath::from_fn(4, 10, t, |s, _| c0 + d * s).unwrap();
        let p = TranscriptionProblem::new(&coeffs, 4, 10, t, 1.0, c0 + d * t).unwrap();
        let e = p.full_value_and_gradient(&f);
        assert!((e.value - 0.5 * d * d * t * PI).abs() < 1e-12);
        // d f / d d = t_j at every node
        let contraction: f64 = (1..=10)
            .flat_map(|j| (0..4).map(move |k| (j, k)))
            .map(|(j, k)| e.gradient[(j - 1) * 4 + k] * f.time(j))
            .sum();
        assert!((contraction - d * t * PI).abs() < 1e-10);
    }

    #[test]
    fn barrier_is_flagged() {
        let coeffs = CoefficientSpec {
            drift: DriftSpec::Cubic,
            diffusion: DiffusionSpec::TanhClamp { c: 0.0 },
            initial: InitialSpec::Constant { c: 0.0 },
        }
        .build()
        .unwrap();
        let p = TranscriptionProblem::new(&coeffs, 4, 4, 1.0, 1.0, 0.0).unwrap();
        let e = p.evaluate(&vec![0.0; p.num_free()]).unwrap();
        assert!(e.barrier);
        assert!(e.value >= BARRIER_VALUE);
    }

    #[test]
    fn endpoint_xbar_eliminates_a_single_node() {
        let coeffs = CoefficientSpec::default().build().unwrap();
        let p = TranscriptionProblem::new(&coeffs, 5, 3, 1.0, 0.0, 0.4).unwrap();
        assert_eq!(p.terminal_weights(), &[(0, 1.0)]);
        let f = p.assemble(&vec![0.0; p.num_free()]).unwrap();
        assert_eq!(f.terminal()[0], 0.4);
    }
}
