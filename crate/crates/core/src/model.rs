//! Problem coefficients: the drift nonlinearity `b`, the diffusion `sigma`
//! and the initial datum `u0`, plus scan-based checks of the standing
//! assumptions (bounded Lipschitz `sigma`, Neumann-compatible `u0`,
//! nondegenerate `sigma`).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// An opaque scalar map. Must be pure.
pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Constant in `|b(x) - b(y)| <= C0 (1 + x^2 + y^2) |x - y|` for the cubic drift.
pub const CUBIC_DRIFT_C0: f64 = 4.0;

/// Default floor for `|sigma|` when the control is recovered from a path.
pub const DEFAULT_SIGMA_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DriftSpec {
    /// `b(x) = x^3 - x`
    #[default]
    Cubic,
    /// `b = 0`, the linear-Gaussian case
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiffusionSpec {
    #[default]
    One,
    /// `sigma(x) = c + sin(x)`
    ShiftedSine { c: f64 },
    /// `sigma(x) = c + tanh(x)`
    TanhClamp { c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    Constant {
        c: f64,
    },
    /// `u0(x) = offset + amplitude * cos(k x)`
    Cos {
        k: u32,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `u0(x) = sum_i coeffs[i] x^i`
    Polynomial {
        coeffs: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Cos {
            k: 2,
            amplitude: 0.1,
            offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CoefficientSpec {
    #[serde(default)]
    pub drift: DriftSpec,
    #[serde(default)]
    pub diffusion: DiffusionSpec,
    #[serde(default)]
    pub initial: InitialSpec,
}

impl CoefficientSpec {
    /// `b = 0`, `sigma = 1`, `u0 = 0`.
    pub fn linear_gaussian() -> Self {
        Self {
            drift: DriftSpec::Zero,
            diffusion: DiffusionSpec::One,
            initial: InitialSpec::Constant { c: 0.0 },
        }
    }

    pub fn build(&self) -> Result<Coefficients> {
        Coefficients::from_spec(self)
    }
}

/// Coefficients of the equation. Immutable once built.
#[derive(Clone)]
pub struct Coefficients {
    pub b: ScalarMap,
    pub b_prime: ScalarMap,
    pub sigma: ScalarMap,
    pub sigma_prime: ScalarMap,
    /// `u0` and its first three derivatives.
    pub u0: [ScalarMap; 4],
    pub is_default_b: bool,
    pub is_zero_b: bool,
    pub is_unit_sigma: bool,
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficients")
            .field("is_default_b", &self.is_default_b)
            .field("is_zero_b", &self.is_zero_b)
            .field("is_unit_sigma", &self.is_unit_sigma)
            .finish_non_exhaustive()
    }
}

impl Coefficients {
    pub fn from_spec(spec: &CoefficientSpec) -> Result<Self> {
        let (b, b_prime): (ScalarMap, ScalarMap) = match spec.drift {
            DriftSpec::Cubic => (
                Arc::new(|x: f64| x * x * x - x),
                Arc::new(|x: f64| 3.0 * x * x - 1.0),
            ),
            DriftSpec::Zero => (Arc::new(|_| 0.0), Arc::new(|_| 0.0)),
        };
        let (sigma, sigma_prime): (ScalarMap, ScalarMap) = match spec.diffusion {
            DiffusionSpec::One => (Arc::new(|_| 1.0), Arc::new(|_| 0.0)),
            DiffusionSpec::ShiftedSine { c } => (
                Arc::new(move |x: f64| c + x.sin()),
                Arc::new(|x: f64| x.cos()),
            ),
            DiffusionSpec::TanhClamp { c } => (
                Arc::new(move |x: f64| c + x.tanh()),
                Arc::new(|x: f64| {
                    let t = x.tanh();
                    1.0 - t * t
                }),
            ),
        };
        let u0 = initial_maps(&spec.initial)?;
        Ok(Self {
            b,
            b_prime,
            sigma,
            sigma_prime,
            u0,
            is_default_b: spec.drift == DriftSpec::Cubic,
            is_zero_b: spec.drift == DriftSpec::Zero,
            is_unit_sigma: spec.diffusion == DiffusionSpec::One,
        })
    }

    /// Assemble from arbitrary maps. `u0` must come with three derivatives.
    pub fn custom(
        b: ScalarMap,
        b_prime: ScalarMap,
        sigma: ScalarMap,
        sigma_prime: ScalarMap,
        u0: [ScalarMap; 4],
    ) -> Self {
        Self {
            b,
            b_prime,
            sigma,
            sigma_prime,
            u0,
            is_default_b: false,
            is_zero_b: false,
            is_unit_sigma: false,
        }
    }

    pub fn b(&self, x: f64) -> f64 {
        (self.b)(x)
    }

    pub fn b_prime(&self, x: f64) -> f64 {
        (self.b_prime)(x)
    }

    pub fn sigma(&self, x: f64) -> f64 {
        (self.sigma)(x)
    }

    pub fn sigma_prime(&self, x: f64) -> f64 {
        (self.sigma_prime)(x)
    }

    pub fn u0(&self, x: f64) -> f64 {
        (self.u0[0])(x)
    }

    pub fn u0_derivative(&self, order: usize, x: f64) -> f64 {
        (self.u0[order])(x)
    }
}

fn initial_maps(spec: &InitialSpec) -> Result<[ScalarMap; 4]> {
    Ok(match spec.clone() {
        InitialSpec::Constant { c } => [
            Arc::new(move |_| c),
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
        ],
        InitialSpec::Cos {
            k,
            amplitude,
            offset,
        } => {
            let kf = k as f64;
            [
                Arc::new(move |x: f64| offset + amplitude * (kf * x).cos()),
                Arc::new(move |x: f64| -amplitude * kf * (kf * x).sin()),
                Arc::new(move |x: f64| -amplitude * kf * kf * (kf * x).cos()),
                Arc::new(move |x: f64| amplitude * kf * kf * kf * (kf * x).sin()),
            ]
        }
        InitialSpec::Polynomial { coeffs } => {
            if coeffs.is_empty() {
                return invalid("polynomial initial datum needs at least one coefficient");
            }
            let derivs: Vec<Vec<f64>> = (0..4)
                .scan(coeffs.clone(), |c, _| {
                    let out = c.clone();
                    *c = differentiate(c);
                    Some(out)
                })
                .collect();
            let slope_left = eval_poly(&derivs[1], 0.0);
            let slope_right = eval_poly(&derivs[1], PI);
            if slope_left.abs() > 1e-8 || slope_right.abs() > 1e-8 {
                return invalid(format!(
                    "polynomial initial datum violates u0'(0) = u0'(pi) = 0 (got {slope_left:.3e}, {slope_right:.3e})"
                ));
            }
            let mk = |c: Vec<f64>| -> ScalarMap { Arc::new(move |x| eval_poly(&c, x)) };
            let mut it = derivs.into_iter();
            [
                mk(it.next().unwrap()),
                mk(it.next().unwrap()),
                mk(it.next().unwrap()),
                mk(it.next().unwrap()),
            ]
        }
    })
}

fn differentiate(c: &[f64]) -> Vec<f64> {
    if c.len() <= 1 {
        return vec![0.0];
    }
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(i, &ci)| i as f64 * ci)
        .collect()
}

fn eval_poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// Scan window for the assumption checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanOptions {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// Configured bound `S` for `|sigma|`.
    pub sigma_bound: f64,
    /// Largest accepted Lipschitz constant of `sigma`.
    pub lipschitz_bound: f64,
    pub sigma_min: f64,
    pub require_nondegenerate: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            lo: -10.0,
            hi: 10.0,
            points: 10_000,
            sigma_bound: 5.0,
            lipschitz_bound: 1e3,
            sigma_min: DEFAULT_SIGMA_MIN,
            require_nondegenerate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
    pub sigma_sup: f64,
    pub sigma_lipschitz: f64,
    pub sigma_min_abs: f64,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn validate_assumptions(coeffs: &Coefficients, scan: &ScanOptions) -> Result<ValidationReport> {
    if scan.points < 2 || !(scan.hi > scan.lo) {
        return invalid("scan window needs hi > lo and at least two points");
    }
    let step = (scan.hi - scan.lo) / (scan.points - 1) as f64;
    let mut sup = 0.0f64;
    let mut lip = 0.0f64;
    let mut min_abs = f64::INFINITY;
    let mut prev: Option<f64> = None;
    for i in 0..scan.points {
        let x = scan.lo + step * i as f64;
        let s = coeffs.sigma(x);
        let bx = coeffs.b(x);
        if !s.is_finite() || !bx.is_finite() {
            return Err(Error::NonFiniteCoefficient { at: x });
        }
        sup = sup.max(s.abs());
        min_abs = min_abs.min(s.abs());
        if let Some(p) = prev {
            lip = lip.max((s - p).abs() / step);
        }
        prev = Some(s);
    }

    let mut checks = vec![
        AssumptionCheck {
            name: "sigma_bounded",
            passed: sup <= scan.sigma_bound,
            measured: sup,
            threshold: scan.sigma_bound,
        },
        AssumptionCheck {
            name: "sigma_lipschitz",
            passed: lip <= scan.lipschitz_bound,
            measured: lip,
            threshold: scan.lipschitz_bound,
        },
    ];

    let left = coeffs.u0_derivative(1, 0.0);
    let right = coeffs.u0_derivative(1, PI);
    if !left.is_finite() || !right.is_finite() {
        return Err(Error::NonFiniteCoefficient { at: 0.0 });
    }
    let slope = left.abs().max(right.abs());
    checks.push(AssumptionCheck {
        name: "u0_neumann",
        passed: slope <= 1e-8,
        measured: slope,
        threshold: 1e-8,
    });
    if scan.require_nondegenerate {
        checks.push(AssumptionCheck {
            name: "sigma_nondegenerate",
            passed: min_abs >= scan.sigma_min,
            measured: min_abs,
            threshold: scan.sigma_min,
        });
    }
    Ok(ValidationReport {
        checks,
        sigma_sup: sup,
        sigma_lipschitz: lip,
        sigma_min_abs: min_abs,
    })
}

/// For the cubic drift: `((b(y) - b(x)) (x - y), 1 + x^2 + y^2)`.
///
/// The first entry never exceeds `(x - y)^2`; the second certifies
/// `|b(x) - b(y)| <= CUBIC_DRIFT_C0 * factor * |x - y|`.
pub fn cubic_drift_bounds(x: f64, y: f64) -> (f64, f64) {
    let b = |v: f64| v * v * v - v;
    ((b(y) - b(x)) * (x - y), 1.0 + x * x + y * y)
}
