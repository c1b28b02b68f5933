use anyhow::anyhow;
use chldp::green::green_error_study;
use chldp::io::{write_control, write_path};
use chldp::model::validate_assumptions;
use chldp::numerics::par_map;
use chldp::optimizer::{convergence_scan, deterministic_path, minimize_rate, rate_curve, RateResult};
use chldp::props;
use chldp::rare_events::{ldp_study, McSetup};
use chldp::sde::{simulate_path, NoiseIncrements};
use chldp::Coefficients;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::output::Table;
use crate::Failure;

pub struct Outcome {
    pub tables: Vec<Table>,
    /// Binary artifacts (file name, bytes).
    pub blobs: Vec<(String, Vec<u8>)>,
    pub summary: String,
}

fn coeffs(cfg: &ExperimentConfig) -> Result<Coefficients, Failure> {
    cfg.model.build().map_err(Failure::from)
}

#[derive(Serialize)]
struct EndpointRow {
    path: u64,
    x: f64,
    value: f64,
}

#[derive(Serialize)]
struct FullRow {
    path: u64,
    t: f64,
    x: f64,
    value: f64,
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    let c = coeffs(cfg)?;
    let (n, m) = (cfg.n, cfg.steps(cfg.n));
    let paths = par_map(cfg.simulate.paths, |p| {
        let noise = NoiseIncrements::generate(cfg.seed, p as u64, n, m, cfg.horizon)?;
        simulate_path(&c, cfg.eps, &noise)
    })
    .into_iter()
    .collect::<chldp::Result<Vec<_>>>()?;
    let nodes = chldp::SpatialGrid::new(n)?.nodes();
    let mut max_abs = 0.0f64;
    let table = if cfg.simulate.full_path {
        let mut rows = Vec::new();
        for (p, s) in paths.iter().enumerate() {
            max_abs = max_abs.max(s.max_abs);
            for j in 0..=m {
                for (k, &x) in nodes.iter().enumerate() {
                    rows.push(FullRow {
                        path: p as u64,
                        t: s.path.time(j),
                        x,
                        value: s.path.slice(j)[k],
                    });
                }
            }
        }
        Table::new("simulate_paths.csv", "simulate", cfg, &rows)?
    } else {
        let mut rows = Vec::new();
        for (p, s) in paths.iter().enumerate() {
            max_abs = max_abs.max(s.max_abs);
            for (k, &x) in nodes.iter().enumerate() {
                rows.push(EndpointRow {
                    path: p as u64,
                    x,
                    value: s.terminal()[k],
                });
            }
        }
        Table::new("simulate_terminal.csv", "simulate", cfg, &rows)?
    };
    Ok(Outcome {
        tables: vec![table],
        blobs: Vec::new(),
        summary: format!("{} paths at n={n}, m={m}, eps={}; max |u| = {max_abs:.4}", paths.len(), cfg.eps),
    })
}

#[derive(Serialize)]
struct RateRow {
    y: f64,
    #[serde(rename = "I")]
    value: f64,
    iterations: usize,
    grad_norm: f64,
    residual: f64,
    converged: bool,
}

impl From<&RateResult> for RateRow {
    fn from(r: &RateResult) -> Self {
        Self {
            y: r.y,
            value: r.value,
            iterations: r.iterations,
            grad_norm: r.grad_norm,
            residual: r.residual,
            converged: r.converged,
        }
    }
}

pub fn rate(cfg: &ExperimentConfig, dump: bool) -> Result<Outcome, Failure> {
    let c = coeffs(cfg)?;
    let (n, m) = (cfg.n, cfg.steps(cfg.n));
    let ys: Vec<f64> = if !cfg.y_list.is_empty() {
        cfg.y_list.clone()
    } else if let Some(y) = cfg.y {
        vec![y]
    } else {
        return Err(Failure::Config(anyhow!("rate needs --y, --y-list or y in the config")));
    };
    let results: Vec<RateResult> = if ys.len() == 1 {
        vec![minimize_rate(&c, n, m, cfg.horizon, cfg.xbar, ys[0], &cfg.rate)?]
    } else {
        rate_curve(&c, n, m, cfg.horizon, cfg.xbar, &ys, &cfg.rate)?
            .points
            .into_iter()
            .map(|p| p.outcome)
            .collect::<chldp::Result<_>>()?
    };
    let rows: Vec<RateRow> = results.iter().map(RateRow::from).collect();
    let mut blobs = Vec::new();
    if dump {
        for (i, r) in results.iter().enumerate() {
            let mut buf = Vec::new();
            write_path(&mut buf, &r.path)?;
            blobs.push((format!("rate_path_{i}.bin"), buf));
            let mut buf = Vec::new();
            write_control(&mut buf, &r.control)?;
            blobs.push((format!("rate_control_{i}.bin"), buf));
        }
    }
    let y0 = deterministic_path(&c, n, m, cfg.horizon)?.terminal_at(cfg.xbar)?;
    let unconverged = results.iter().filter(|r| !r.converged).count();
    Ok(Outcome {
        tables: vec![Table::new("rate.csv", "rate", cfg, &rows)?],
        blobs,
        summary: format!("{} levels at n={n}, m={m}; y0 = {y0:.6}; {unconverged} not converged", rows.len()),
    })
}

#[derive(Serialize)]
struct ConvergeRow {
    n: usize,
    m: usize,
    #[serde(rename = "I")]
    value: f64,
    iterations: usize,
    converged: bool,
    diff_to_finest: f64,
}

pub fn converge(cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    let c = coeffs(cfg)?;
    let y = cfg
        .y
        .ok_or_else(|| Failure::Config(anyhow!("converge needs --y or y in the config")))?;
    let rep = convergence_scan(&c, &cfg.n_list, cfg.m_rule(), cfg.horizon, cfg.xbar, y, &cfg.rate)?;
    if let Some(e) = rep.rows.iter().find_map(|r| r.error.as_ref()) {
        return Err(Failure::Numerical(anyhow!("convergence scan: {e}")));
    }
    let rows: Vec<ConvergeRow> = rep
        .rows
        .iter()
        .map(|r| ConvergeRow {
            n: r.n,
            m: r.m,
            value: r.value,
            iterations: r.iterations,
            converged: r.converged,
            diff_to_finest: r.diff_to_finest,
        })
        .collect();
    Ok(Outcome {
        tables: vec![Table::new("converge.csv", "converge", cfg, &rows)?],
        blobs: Vec::new(),
        summary: format!("differences to the finest n shrink: {}", rep.differences_shrink),
    })
}

#[derive(Serialize)]
struct McRow {
    eps: f64,
    p_hat: f64,
    stderr: f64,
    minus_eps_log_p: f64,
    #[serde(rename = "I_inf")]
    rate_inf: f64,
    rel_gap: f64,
    hits: usize,
    importance_sampled: bool,
    weight_mean: f64,
    excluded: String,
}

pub fn mc_verify(cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    let c = coeffs(cfg)?;
    let y = cfg
        .y
        .ok_or_else(|| Failure::Config(anyhow!("mc-verify needs --y or y in the config")))?;
    let setup = McSetup {
        n: cfg.n,
        m: cfg.steps(cfg.n),
        horizon: cfg.horizon,
        xbar: cfg.xbar,
        samples: cfg.samples,
        seed: cfg.seed,
    };
    let fit = ldp_study(&c, &setup, y, &cfg.eps_list, cfg.mc.importance, &cfg.rate)?;
    if !fit.extrapolated.is_finite() {
        return Err(Failure::Numerical(anyhow!(
            "no hits at any eps for y = {y}: underflow; use importance sampling"
        )));
    }
    let rows: Vec<McRow> = fit
        .rows
        .iter()
        .map(|r| {
            let e = r.estimate.as_ref();
            McRow {
                eps: r.eps,
                p_hat: e.map_or(0.0, |e| e.p_hat),
                stderr: e.map_or(f64::NAN, |e| e.std_err),
                minus_eps_log_p: e.map_or(f64::NAN, |e| e.minus_eps_log_p),
                rate_inf: fit.rate_inf,
                rel_gap: fit.rel_gap,
                hits: e.map_or(0, |e| e.hits),
                importance_sampled: e.is_some_and(|e| e.importance_sampled),
                weight_mean: e.map_or(f64::NAN, |e| e.weight_mean),
                excluded: r.excluded.clone().unwrap_or_default(),
            }
        })
        .collect();
    Ok(Outcome {
        tables: vec![Table::new("mc_verify.csv", "mc-verify", cfg, &rows)?],
        blobs: Vec::new(),
        summary: format!(
            "-eps ln P extrapolates to {:.4}; inf I^n = {:.4}; relative gap {:.3}",
            fit.extrapolated, fit.rate_inf, fit.rel_gap
        ),
    })
}

#[derive(Serialize)]
struct GreenRow {
    n: usize,
    #[serde(rename = "E2")]
    e2: f64,
    #[serde(rename = "E1")]
    e1: f64,
    slope_e2: f64,
    slope_e1: f64,
}

pub fn green_check(cfg: &ExperimentConfig, n_list_given: bool) -> Result<Outcome, Failure> {
    let mut opts = cfg.green.clone();
    opts.horizon = cfg.horizon;
    if n_list_given {
        opts.n_list = cfg.n_list.clone();
    }
    if opts.n_list.len() < 2 {
        return Err(Failure::Config(anyhow!("green-check needs at least two n values")));
    }
    let rep = green_error_study(&opts)?;
    let rows: Vec<GreenRow> = rep
        .rows
        .iter()
        .map(|r| GreenRow {
            n: r.n,
            e2: r.e2,
            e1: r.e1,
            slope_e2: rep.slope_e2,
            slope_e1: rep.slope_e1,
        })
        .collect();
    Ok(Outcome {
        tables: vec![Table::new("green_check.csv", "green-check", cfg, &rows)?],
        blobs: Vec::new(),
        summary: format!("slope E2 {:.3}, slope E1 {:.3}", rep.slope_e2, rep.slope_e1),
    })
}

#[derive(Serialize)]
struct CheckRow {
    check: &'static str,
    passed: bool,
    measured: f64,
    threshold: f64,
}

pub fn validate(cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    let c = coeffs(cfg)?;
    let rep = validate_assumptions(&c, &cfg.scan)?;
    let rows: Vec<CheckRow> = rep
        .checks
        .iter()
        .map(|c| CheckRow {
            check: c.name,
            passed: c.passed,
            measured: c.measured,
            threshold: c.threshold,
        })
        .collect();
    let table = Table::new("validate.csv", "validate", cfg, &rows)?;
    if let Some(bad) = rep.checks.iter().find(|c| !c.passed) {
        return Err(Failure::Config(anyhow!(
            "assumption '{}' fails: measured {:.3e}, threshold {:.3e}",
            bad.name,
            bad.measured,
            bad.threshold
        ))
        .with_tables(vec![table]));
    }
    Ok(Outcome {
        tables: vec![table],
        blobs: Vec::new(),
        summary: format!("{} assumption checks passed", rows.len()),
    })
}

#[derive(Serialize)]
struct PropCsvRow {
    suite: String,
    n: usize,
    samples: usize,
    statistic: f64,
    passed: bool,
}

pub fn props(cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    let suites = props::run_all(cfg.seed)?;
    let mut rows = Vec::new();
    for s in &suites {
        for r in &s.rows {
            rows.push(PropCsvRow {
                suite: s.name.clone(),
                n: r.n,
                samples: r.samples,
                statistic: r.statistic,
                passed: r.passed,
            });
        }
    }
    let table = Table::new("props.csv", "props", cfg, &rows)?;
    let failed: Vec<&str> = suites.iter().filter(|s| !s.passed).map(|s| s.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(Failure::Numerical(anyhow!("property suites failed: {}", failed.join(", "))).with_tables(vec![table]));
    }
    Ok(Outcome {
        tables: vec![table],
        blobs: Vec::new(),
        summary: format!("{} suites passed", suites.len()),
    })
}

/// Refuse to run numerical commands on coefficients that break the standing
/// assumptions.
pub fn precheck(cfg: &ExperimentConfig) -> Result<(), Failure> {
    cfg.check().map_err(Failure::Config)?;
    cfg.check_assumptions().map_err(Failure::Config)?;
    if cfg.simulate.paths == 0 {
        return Err(Failure::Config(anyhow!("simulate.paths must be positive")));
    }
    Ok(())
}
