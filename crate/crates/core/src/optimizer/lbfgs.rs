//! Limited-memory BFGS with the Gauss-Newton preconditioner as initial
//! inverse Hessian and Armijo backtracking.

use std::collections::VecDeque;

use super::precond::GaussNewtonPreconditioner;
use super::transcription::TranscriptionProblem;
use super::RateOptions;
use crate::error::Result;

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
const ROUNDOFF_DECREASE: f64 = 100.0 * f64::EPSILON;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    /// `sqrt(g^T H^{-1} g)` in the Gauss-Newton metric.
    pub grad_norm: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub converged: bool,
    pub barrier: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn dual_norm(p: &Option<GaussNewtonPreconditioner>, g: &[f64]) -> f64 {
    dot(g, &precondition(p, g)).max(0.0).sqrt()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn precondition(p: &Option<GaussNewtonPreconditioner>, q: &[f64]) -> Vec<f64> {
    match p {
        Some(p) => p.apply(q),
        None => q.to_vec(),
    }
}

fn two_loop(mem: &VecDeque<Pair>, pre: &Option<GaussNewtonPreconditioner>, g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alpha = Vec::with_capacity(mem.len());
    for p in mem.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        for (qi, yi) in q.iter_mut().zip(&p.y) {
            *qi -= a * yi;
        }
        alpha.push(a);
    }
    let mut r = precondition(pre, &q);
    for (p, a) in mem.iter().zip(alpha.iter().rev()) {
        let b = p.rho * dot(&p.y, &r);
        for (ri, si) in r.iter_mut().zip(&p.s) {
            *ri += (a - b) * si;
        }
    }
    r
}

pub(crate) fn minimize(problem: &TranscriptionProblem, mut x: Vec<f64>, opts: &RateOptions) -> Result<RunOutcome> {
    let refresh = |x: &[f64]| -> Result<Option<GaussNewtonPreconditioner>> {
        Ok(GaussNewtonPreconditioner::new(problem, &problem.assemble(x)?))
    };
    let mut eval = problem.evaluate(&x)?;
    let mut pre = refresh(&x)?;
    let mut mem: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);
    let mut since_refresh = 0;
    let mut fresh = true;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        let gnorm = dual_norm(&pre, &eval.gradient);
        if !eval.barrier && gnorm < opts.grad_tol * eval.value.max(1.0) {
            converged = true;
            break;
        }
        let mut d: Vec<f64> = two_loop(&mem, &pre, &eval.gradient).iter().map(|v| -v).collect();
        let mut slope = dot(&d, &eval.gradient);
        if !(slope < 0.0) {
            mem.clear();
            d = eval.gradient.iter().map(|v| -v).collect();
            slope = dot(&d, &eval.gradient);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            if let Ok(e) = problem.evaluate(&trial) {
                if e.value.is_finite() && e.value <= eval.value + ARMIJO_C1 * step * slope {
                    accepted = Some((trial, e));
                    break;
                }
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((trial, next)) = accepted else {
            if fresh && mem.is_empty() {
                // no progress along the preconditioned gradient: accept if the
                // predicted decrease is below the resolution of the objective
                converged = !eval.barrier && 0.5 * gnorm * gnorm <= ROUNDOFF_DECREASE * eval.value.max(1.0);
                break;
            }
            mem.clear();
            pre = refresh(&x)?;
            since_refresh = 0;
            fresh = true;
            continue;
        };
        fresh = false;
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = next.gradient.iter().zip(&eval.gradient).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-300 {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back(Pair { s, y: yv, rho: 1.0 / sy });
        }
        x = trial;
        eval = next;
        since_refresh += 1;
        if since_refresh >= opts.refresh_every.max(1) {
            pre = refresh(&x)?;
            // pairs were built against the old metric; keep them
            since_refresh = 0;
        }
    }
    Ok(RunOutcome {
        grad_norm: dual_norm(&pre, &eval.gradient),
        grad_inf: inf_norm(&eval.gradient),
        value: eval.value,
        barrier: eval.barrier,
        x,
        iterations,
        converged,
    })
}
