//! wasm-bindgen entry points for the static page in `www/`.
//!
//! Every export returns a flat `Float64Array`; the page knows the layout.

use chldp::optimizer::{deterministic_path, rate_curve, RateOptions};
use chldp::sde::{simulate_path, NoiseIncrements};
use chldp::skeleton::SpaceTimePath;
use chldp::{CoefficientSpec, Coefficients};
use wasm_bindgen::prelude::*;

fn model(drift: &str) -> chldp::Result<Coefficients> {
    match drift {
        "cubic" => CoefficientSpec::default().build(),
        "linear" => CoefficientSpec::linear_gaussian().build(),
        other => Err(chldp::Error::InvalidArgument(format!("unknown model '{other}'"))),
    }
}

/// Interleaved `[y_0, I_0, y_1, I_1, ...]` on `points` levels from `y_lo`
/// to `y_hi`. Failed levels come back as `NaN`.
pub fn curve(drift: &str, n: usize, m: usize, horizon: f64, xbar: f64, y_lo: f64, y_hi: f64, points: usize) -> chldp::Result<Vec<f64>> {
    let c = model(drift)?;
    let k = points.max(2);
    let ys: Vec<f64> = (0..k).map(|i| y_lo + (y_hi - y_lo) * i as f64 / (k - 1) as f64).collect();
    let opts = RateOptions {
        multi_start: false,
        max_iterations: 400,
        ..RateOptions::default()
    };
    let rc = rate_curve(&c, n, m, horizon, xbar, &ys, &opts)?;
    Ok(rc.points.iter().flat_map(|p| [p.y, p.value()]).collect())
}

/// `[I, y0, values...]` where `values` is the minimizing path, `(m + 1) x n`
/// row-major.
pub fn optimal(drift: &str, n: usize, m: usize, horizon: f64, xbar: f64, y: f64) -> chldp::Result<Vec<f64>> {
    let c = model(drift)?;
    let y0 = deterministic_path(&c, n, m, horizon)?.terminal_at(xbar)?;
    let r = chldp::optimizer::minimize_rate(&c, n, m, horizon, xbar, y, &RateOptions::default())?;
    Ok(flatten(&[r.value, y0], &r.path))
}

/// `[max |u|, values...]` for one noisy path, `(m + 1) x n` row-major.
pub fn sample(drift: &str, n: usize, m: usize, horizon: f64, eps: f64, seed: u64) -> chldp::Result<Vec<f64>> {
    let c = model(drift)?;
    let noise = NoiseIncrements::generate(seed, 0, n, m, horizon)?;
    let p = simulate_path(&c, eps, &noise)?;
    Ok(flatten(&[p.max_abs], &p.path))
}

fn flatten(head: &[f64], path: &SpaceTimePath) -> Vec<f64> {
    head.iter().chain(&path.values).copied().collect()
}

fn js(e: chldp::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn rate_curve_js(drift: &str, n: usize, m: usize, horizon: f64, xbar: f64, y_lo: f64, y_hi: f64, points: usize) -> Result<Vec<f64>, JsError> {
    curve(drift, n, m, horizon, xbar, y_lo, y_hi, points).map_err(js)
}

#[wasm_bindgen]
pub fn optimal_path_js(drift: &str, n: usize, m: usize, horizon: f64, xbar: f64, y: f64) -> Result<Vec<f64>, JsError> {
    optimal(drift, n, m, horizon, xbar, y).map_err(js)
}

#[wasm_bindgen]
pub fn sample_path_js(drift: &str, n: usize, m: usize, horizon: f64, eps: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    sample(drift, n, m, horizon, eps, seed).map_err(js)
}
