//! Forward-backward Newton-type line-search solver with L-BFGS directions,
//! and the plain forward-backward baseline.
//!
//! Each PANOC iteration computes `ū = prox_{γg}(u − γ∇ℓ(u))`, the residual
//! `r = (u − ū)/γ` and a quasi-Newton direction `d = −H r`, then takes
//!
//! ```text
//! u⁺ = u − (1 − τ)γ r + τ d
//! ```
//!
//! with the largest `τ ∈ {1, ½, ¼, …}` satisfying
//! `φ_γ(u⁺) ≤ φ_γ(u) − σ‖r‖²`. After `max_backtracks` halvings the pure
//! forward-backward step `u⁺ = ū` is taken instead.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::fbe::{ensure_gamma, fb_step, fb_step_from, FbStep, GammaState};
use crate::lbfgs::LbfgsBuffer;
use crate::linalg::{scale, sub};
use crate::problem::Composite;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Stop when `‖r‖∞ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Wall-clock budget in seconds.
    pub max_time: Option<f64>,
    pub lbfgs_memory: usize,
    pub max_backtracks: usize,
    pub max_halvings: usize,
    /// Initial Lipschitz estimate; estimated from a gradient difference when
    /// absent.
    pub lipschitz: Option<f64>,
    /// Initial `γ · L`.
    pub gamma_ratio: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-3,
            max_iter: 5000,
            max_time: None,
            lbfgs_memory: 10,
            max_backtracks: 20,
            max_halvings: 60,
            lipschitz: None,
            gamma_ratio: 0.95,
        }
    }
}

impl SolverOptions {
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.tol > 0.0) {
            out.push(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter < 1 {
            out.push("max_iter must be at least 1".into());
        }
        if self.lbfgs_memory < 1 {
            out.push("lbfgs_memory must be at least 1".into());
        }
        if !(self.gamma_ratio > 0.0 && self.gamma_ratio < 1.0) {
            out.push(format!(
                "gamma_ratio must lie in (0, 1), got {}",
                self.gamma_ratio
            ));
        }
        if let Some(l) = self.lipschitz {
            if !(l > 0.0) {
                out.push(format!("lipschitz must be positive, got {l}"));
            }
        }
        if let Some(t) = self.max_time {
            if !(t > 0.0) {
                out.push(format!("max_time must be positive, got {t}"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIter,
    MaxTime,
    LinesearchFailure,
    NumericalError,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIter => "max_iter",
            Status::MaxTime => "max_time",
            Status::LinesearchFailure => "linesearch_failure",
            Status::NumericalError => "numerical_error",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One row of the iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateRecord {
    pub k: usize,
    /// `φ_γ(u^k)` at the step size of this iteration.
    pub fbe: f64,
    pub res_inf: f64,
    /// Accepted averaging parameter; `None` on the terminating iteration.
    pub tau: Option<f64>,
    pub gamma: f64,
    pub backtracks: usize,
    pub time_s: f64,
    /// Line-search coefficient in effect.
    pub sigma: f64,
    /// `‖r^k‖₂²`.
    pub res_norm_sq: f64,
    /// `φ(ū^k) = ℓ(ū^k) + g(ū^k)`.
    pub phi_bar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub u: Vec<f64>,
    /// Final forward-backward point; the reported solution.
    pub u_bar: Vec<f64>,
    pub iterations: usize,
    pub status: Status,
    pub final_residual: f64,
    pub fbe_final: f64,
    pub gamma: GammaState,
    pub trace: Vec<IterateRecord>,
}

/// `u − (1 − τ)γ r + τ d`.
pub fn averaged_update(u: &[f64], r: &[f64], d: &[f64], tau: f64, gamma: f64) -> Vec<f64> {
    let a = (1.0 - tau) * gamma;
    u.iter()
        .zip(r.iter().zip(d))
        .map(|(ui, (ri, di))| ui - a * ri + tau * di)
        .collect()
}

/// Shared prologue: option checks, first step and initial step size.
fn start<P: Composite + ?Sized>(
    problem: &P,
    u0: &[f64],
    opts: &SolverOptions,
) -> Result<std::result::Result<(GammaState, FbStep), Solution>> {
    check_dim("initial guess", problem.dim(), u0.len())?;
    let bad = opts.check();
    if !bad.is_empty() {
        return Err(Error::Config(bad.join("; ")));
    }
    let mut grad = vec![0.0; u0.len()];
    let first = problem
        .cost_and_gradient(u0, &mut grad)
        .ok()
        .filter(|c| c.is_finite() && grad.iter().all(|g| g.is_finite()));
    let Some(cost) = first else {
        return Ok(Err(failed(u0, Status::NumericalError)));
    };
    let state = match opts.lipschitz {
        Some(l) => GammaState::new(l, opts.gamma_ratio),
        None => match GammaState::estimate(problem, u0, &grad, opts.gamma_ratio) {
            Ok(s) => s,
            Err(_) => return Ok(Err(failed(u0, Status::NumericalError))),
        },
    };
    let step = fb_step_from(problem, u0.to_vec(), cost, grad, state.gamma);
    Ok(Ok((state, step)))
}

fn failed(u0: &[f64], status: Status) -> Solution {
    Solution {
        u: u0.to_vec(),
        u_bar: u0.to_vec(),
        iterations: 0,
        status,
        final_residual: f64::INFINITY,
        fbe_final: f64::NAN,
        gamma: GammaState::new(1.0, 0.5),
        trace: Vec::new(),
    }
}

fn finish(step: FbStep, state: GammaState, status: Status, trace: Vec<IterateRecord>) -> Solution {
    Solution {
        final_residual: step.res_inf(),
        fbe_final: step.fbe,
        iterations: trace.len(),
        u: step.u,
        u_bar: step.u_bar,
        status,
        gamma: state,
        trace,
    }
}

fn record(
    k: usize,
    step: &FbStep,
    state: &GammaState,
    cost_bar: f64,
    clock: &Instant,
) -> IterateRecord {
    IterateRecord {
        k,
        fbe: step.fbe,
        res_inf: step.res_inf(),
        tau: None,
        gamma: state.gamma,
        backtracks: 0,
        time_s: clock.elapsed().as_secs_f64(),
        sigma: state.sigma,
        res_norm_sq: step.res_norm_sq(),
        phi_bar: cost_bar + step.g_bar,
    }
}

fn out_of_time(opts: &SolverOptions, clock: &Instant) -> bool {
    opts.max_time
        .is_some_and(|t| clock.elapsed().as_secs_f64() > t)
}

pub fn panoc_solve<P: Composite + ?Sized>(
    problem: &P,
    u0: &[f64],
    opts: &SolverOptions,
) -> Result<Solution> {
    let clock = Instant::now();
    let (mut state, mut step) = match start(problem, u0, opts)? {
        Ok(s) => s,
        Err(sol) => return Ok(sol),
    };
    let mut lbfgs = LbfgsBuffer::new(u0.len(), opts.lbfgs_memory);
    let mut trace: Vec<IterateRecord> = Vec::new();
    let mut forced_halving = false;

    while trace.len() < opts.max_iter {
        let (new_state, new_step, cost_bar, changed) =
            match ensure_gamma(problem, state, step.clone(), opts.max_halvings) {
                Ok(v) => v,
                Err(_) => return Ok(finish(step, state, Status::NumericalError, trace)),
            };
        state = new_state;
        step = new_step;
        if changed {
            lbfgs.reset();
        }

        let mut rec = record(trace.len(), &step, &state, cost_bar, &clock);
        if rec.res_inf <= opts.tol {
            trace.push(rec);
            return Ok(finish(step, state, Status::Converged, trace));
        }
        if out_of_time(opts, &clock) {
            trace.push(rec);
            return Ok(finish(step, state, Status::MaxTime, trace));
        }

        let mut d = lbfgs.direction(&step.r);
        if lbfgs.is_empty() {
            // H₀ = γI: the first quasi-Newton step is the forward-backward step
            scale(state.gamma, &mut d);
        }
        // rounding slack, so that unit steps are not rejected on noise near
        // the solution
        let target =
            step.fbe - state.sigma * step.res_norm_sq() + 10.0 * f64::EPSILON * step.fbe.abs();
        let mut tau = 1.0;
        let mut accepted = None;
        for i in 0..=opts.max_backtracks {
            let cand = averaged_update(&step.u, &step.r, &d, tau, state.gamma);
            if let Ok(trial) = fb_step(problem, &cand, state.gamma) {
                if trial.fbe <= target {
                    accepted = Some((trial, tau, i));
                    break;
                }
            }
            tau *= 0.5;
        }
        let (trial, tau, backtracks) = match accepted {
            Some(a) => a,
            None => match fb_step(problem, &step.u_bar, state.gamma) {
                Ok(trial) if trial.fbe <= target => (trial, 0.0, opts.max_backtracks + 1),
                _ => {
                    // only possible with a wrong Lipschitz estimate
                    if forced_halving {
                        return Ok(finish(step, state, Status::LinesearchFailure, trace));
                    }
                    forced_halving = true;
                    state.halve();
                    lbfgs.reset();
                    let FbStep { u, grad, cost, .. } = step;
                    step = fb_step_from(problem, u, cost, grad, state.gamma);
                    continue;
                }
            },
        };
        forced_halving = false;

        rec.tau = Some(tau);
        rec.backtracks = backtracks;
        rec.time_s = clock.elapsed().as_secs_f64();
        trace.push(rec);

        let s = sub(&trial.u, &step.u);
        let y = sub(&trial.r, &step.r);
        lbfgs.push(&s, &y)?;
        step = trial;
    }
    Ok(finish(step, state, Status::MaxIter, trace))
}

/// Plain forward-backward iteration `u⁺ = ū` with the same step-size
/// safeguard and stopping rule.
pub fn fbs_solve<P: Composite + ?Sized>(
    problem: &P,
    u0: &[f64],
    opts: &SolverOptions,
) -> Result<Solution> {
    let clock = Instant::now();
    let (mut state, mut step) = match start(problem, u0, opts)? {
        Ok(s) => s,
        Err(sol) => return Ok(sol),
    };
    let mut trace: Vec<IterateRecord> = Vec::new();

    while trace.len() < opts.max_iter {
        let (new_state, new_step, cost_bar, _) =
            match ensure_gamma(problem, state, step.clone(), opts.max_halvings) {
                Ok(v) => v,
                Err(_) => return Ok(finish(step, state, Status::NumericalError, trace)),
            };
        state = new_state;
        step = new_step;

        let mut rec = record(trace.len(), &step, &state, cost_bar, &clock);
        if rec.res_inf <= opts.tol {
            trace.push(rec);
            return Ok(finish(step, state, Status::Converged, trace));
        }
        if out_of_time(opts, &clock) {
            trace.push(rec);
            return Ok(finish(step, state, Status::MaxTime, trace));
        }
        let next = match fb_step(problem, &step.u_bar, state.gamma) {
            Ok(n) => n,
            Err(_) => return Ok(finish(step, state, Status::NumericalError, trace)),
        };
        rec.tau = Some(0.0);
        rec.time_s = clock.elapsed().as_secs_f64();
        trace.push(rec);
        step = next;
    }
    Ok(finish(step, state, Status::MaxIter, trace))
}

/// Column header of [`write_trace_csv`].
pub const TRACE_HEADER: &str = "k,fbe,res_inf,tau,gamma,backtracks,time_s";

/// One CSV row per record; `tau` is empty on the terminating iteration.
pub fn write_trace_csv<W: Write>(records: &[IterateRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in records {
        let tau = r.tau.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.k, r.fbe, r.res_inf, tau, r.gamma, r.backtracks, r.time_s
        )?;
    }
    Ok(())
}

/// Indices `k` where the sufficient-decrease condition between records `k`
/// and `k + 1` at equal `γ` is violated by more than `slack`.
pub fn linesearch_violations(trace: &[IterateRecord], slack: f64) -> Vec<usize> {
    trace
        .windows(2)
        .filter(|w| w[0].gamma == w[1].gamma)
        .filter(|w| w[1].fbe > w[0].fbe - w[0].sigma * w[0].res_norm_sq + slack)
        .map(|w| w[0].k)
        .collect()
}

/// Left and right sides of the telescoped sufficient-decrease bound,
/// `Σ‖r^k‖² ≤ Σ_segments (φ_γ(first) − φ_γ(last))/σ`, summed over maximal
/// runs of records at constant `γ`.
pub fn square_summability(trace: &[IterateRecord]) -> (f64, f64) {
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    let mut start = 0;
    while start < trace.len() {
        let mut end = start;
        while end + 1 < trace.len() && trace[end + 1].gamma == trace[start].gamma {
            end += 1;
        }
        lhs += trace[start..end].iter().map(|r| r.res_norm_sq).sum::<f64>();
        rhs += (trace[start].fbe - trace[end].fbe) / trace[start].sigma;
        start = end + 1;
    }
    (lhs, rhs)
}
