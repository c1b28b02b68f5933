//! Monte Carlo estimates of `P(u^{eps,n}(T, xbar) >= y)` and the check that
//! `-eps ln P` approaches `inf_{z >= y} I^n(z)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::SpatialGrid;
use crate::model::Coefficients;
use crate::numerics::par_map;
use crate::optimizer::{minimize_rate, rate_curve, RateOptions};
use crate::sde::{girsanov_log_weight, simulate_terminal, NoiseIncrements};
use crate::skeleton::Control;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSetup {
    pub n: usize,
    pub m: usize,
    pub horizon: f64,
    pub xbar: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub eps: f64,
    pub n: usize,
    pub m: usize,
    /// Event `[y, inf)`.
    pub y: f64,
    pub samples: usize,
    pub hits: usize,
    pub p_hat: f64,
    pub std_err: f64,
    pub minus_eps_log_p: f64,
    pub importance_sampled: bool,
    /// `||h||^2` of the tilt, if any.
    pub tilt_norm_sq: Option<f64>,
    /// Sample mean and standard error of the likelihood ratio; 1 and 0
    /// without a tilt.
    pub weight_mean: f64,
    pub weight_std_err: f64,
    /// Binomial standard error a plain run with the same `p_hat` would have.
    pub plain_std_err: f64,
}

impl McEstimate {
    /// The weight mean is within three standard errors of 1.
    pub fn weight_audit_passed(&self) -> bool {
        (self.weight_mean - 1.0).abs() <= 3.0 * self.weight_std_err
    }
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `(1/N) sum w_i 1{u_i(T, xbar) >= y}` with Girsanov weights `w_i` when a
/// tilt is given. Sample `i` uses stream `i` of `seed`.
pub fn mc_hitting_probability(
    coeffs: &Coefficients,
    setup: &McSetup,
    eps: f64,
    y: f64,
    tilt: Option<&Control>,
) -> Result<McEstimate> {
    if setup.samples < 100 {
        return invalid("at least 100 samples are required");
    }
    if !(eps > 0.0) {
        return invalid("eps must be positive");
    }
    if y.is_nan() {
        return invalid("threshold is NaN");
    }
    if let Some(h) = tilt {
        if h.n != setup.n || h.m != setup.m || h.horizon != setup.horizon {
            return Err(Error::GridMismatch("tilt control must live on the simulation grid".into()));
        }
    }
    let grid = SpatialGrid::new(setup.n)?;
    let weights = grid.interpolation_weights(setup.xbar)?;
    let draws = par_map(setup.samples, |i| -> Result<(bool, f64)> {
        let noise = NoiseIncrements::generate(setup.seed, i as u64, setup.n, setup.m, setup.horizon)?;
        let end = simulate_terminal(coeffs, eps, &noise, tilt)?;
        let w = match tilt {
            Some(h) => girsanov_log_weight(&noise, h, eps)?.exp(),
            None => 1.0,
        };
        Ok((weights.apply(&end) >= y, w))
    });
    let draws: Vec<(bool, f64)> = draws.into_iter().collect::<Result<_>>()?;
    let hits = draws.iter().filter(|d| d.0).count();
    if hits == 0 {
        return Err(Error::Underflow { threshold: y });
    }
    let n = setup.samples as f64;
    let binomial = |p: f64| (p * (1.0 - p) / n).max(0.0).sqrt();
    let (p_hat, std_err, weight_mean, weight_std_err) = if tilt.is_some() {
        let contrib: Vec<f64> = draws.iter().map(|&(h, w)| if h { w } else { 0.0 }).collect();
        let w: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let (p, se) = mean_and_se(&contrib);
        let (wm, wse) = mean_and_se(&w);
        (p, se, wm, wse)
    } else {
        let p = hits as f64 / n;
        (p, binomial(p), 1.0, 0.0)
    };
    Ok(McEstimate {
        eps,
        n: setup.n,
        m: setup.m,
        y,
        samples: setup.samples,
        hits,
        p_hat,
        std_err,
        minus_eps_log_p: -eps * p_hat.ln(),
        importance_sampled: tilt.is_some(),
        tilt_norm_sq: tilt.map(|h| h.norm_sq()),
        weight_mean,
        weight_std_err,
        plain_std_err: binomial(p_hat.min(1.0)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpRow {
    pub eps: f64,
    pub estimate: Option<McEstimate>,
    /// Why the row was left out of the fit.
    pub excluded: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpFit {
    pub y: f64,
    pub rows: Vec<LdpRow>,
    /// `-eps ln P` extrapolated to `eps = 0` by a least-squares line in `eps`.
    pub extrapolated: f64,
    pub slope: f64,
    /// `inf_{z >= y} I^n(z)`.
    pub rate_inf: f64,
    /// `|extrapolated - rate_inf| / rate_inf`.
    pub rel_gap: f64,
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    match x.len() {
        0 => (f64::NAN, f64::NAN),
        1 => (y[0], f64::NAN),
        _ => {
            let n = x.len() as f64;
            let mx = x.iter().sum::<f64>() / n;
            let my = y.iter().sum::<f64>() / n;
            let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
            let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
            let slope = sxy / sxx;
            (my - slope * mx, slope)
        }
    }
}

/// `-eps ln P_hat` over a decreasing list of `eps`, extrapolated to 0 and
/// compared with `rate_inf`.
pub fn ldp_fit(
    coeffs: &Coefficients,
    setup: &McSetup,
    y: f64,
    eps_list: &[f64],
    rate_inf: f64,
    tilt: Option<&Control>,
) -> Result<LdpFit> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("eps list must be non-empty and strictly decreasing");
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        match mc_hitting_probability(coeffs, setup, eps, y, tilt) {
            Ok(e) => rows.push(LdpRow {
                eps,
                estimate: Some(e),
                excluded: None,
            }),
            Err(Error::Underflow { .. }) => rows.push(LdpRow {
                eps,
                estimate: None,
                excluded: Some("underflow".into()),
            }),
            Err(e) => return Err(e),
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.estimate.as_ref().map(|e| (e.eps, e.minus_eps_log_p)))
        .unzip();
    let (extrapolated, slope) = linear_fit(&xs, &ys);
    let rel_gap = if rate_inf > 0.0 {
        (extrapolated - rate_inf).abs() / rate_inf
    } else {
        extrapolated.abs()
    };
    Ok(LdpFit {
        y,
        rows,
        extrapolated,
        slope,
        rate_inf,
        rel_gap,
    })
}

/// `ldp_fit` with the rate side computed here: `I^n` on a short grid of
/// levels at and above `y` gives `inf_{z >= y}`, and the minimizer at `y`
/// serves as the tilt when `importance` is set.
pub fn ldp_study(
    coeffs: &Coefficients,
    setup: &McSetup,
    y: f64,
    eps_list: &[f64],
    importance: bool,
    opts: &RateOptions,
) -> Result<LdpFit> {
    let levels: Vec<f64> = (0..5).map(|k| y + 0.25 * k as f64 * y.abs().max(0.1)).collect();
    let curve = rate_curve(coeffs, setup.n, setup.m, setup.horizon, setup.xbar, &levels, opts)?;
    let rate_inf = curve.points[0].tail_inf;
    let tilt = if importance {
        Some(minimize_rate(coeffs, setup.n, setup.m, setup.horizon, setup.xbar, y, opts)?.control)
    } else {
        None
    };
    ldp_fit(coeffs, setup, y, eps_list, rate_inf, tilt.as_ref())
}
