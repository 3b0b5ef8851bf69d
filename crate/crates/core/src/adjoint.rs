//! Forward rollout of the single-shooting cost with Moreau-smoothed soft state
//! constraints, and the backward sweep that returns `∇ℓ(u)`.
//!
//! The sweep differentiates the discretized maps (RK4 tape or the supplied
//! discrete VJPs), so cost and gradient are mutually exact.

use crate::error::{check_dim, Error, Result};
use crate::integrator::{rk4_step, rk4_step_vjp, Rk4Step};
use crate::problem::{Composite, Dynamics, ProblemSpec};
use crate::prox::{soft_penalty, SoftPenaltyResult};

/// Per-stage forward record.
#[derive(Debug, Clone, PartialEq)]
pub enum StepRecord {
    Rk4(Rk4Step),
    Discrete { x_next: Vec<f64>, stage_cost: f64 },
}

impl StepRecord {
    pub fn stage_cost(&self) -> f64 {
        match self {
            StepRecord::Rk4(s) => s.stage_cost,
            StepRecord::Discrete { stage_cost, .. } => *stage_cost,
        }
    }
}

/// Forward-pass record of one control sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub inputs: Vec<f64>,
    /// `x_0 ..= x_N`.
    pub states: Vec<Vec<f64>>,
    pub steps: Vec<StepRecord>,
    /// Soft-penalty data per stage `0..=N`; empty results where `m_n = 0`.
    pub soft: Vec<SoftPenaltyResult>,
    pub terminal_cost: f64,
    /// `ℓ(u)`: stage costs, soft-penalty values and terminal cost.
    pub cost: f64,
}

fn soft_at(
    spec: &ProblemSpec,
    stage: usize,
    x: &[f64],
    u: Option<&[f64]>,
) -> Result<SoftPenaltyResult> {
    let Some(soft) = &spec.soft else {
        return Ok(SoftPenaltyResult::default());
    };
    let st = &soft.stages[stage];
    if st.mu.is_empty() {
        return Ok(SoftPenaltyResult::default());
    }
    let mut z = vec![0.0; st.mu.len()];
    soft.map.eval(stage, x, u, &mut z);
    soft_penalty(&z, &st.lower_bounds, &st.mu)
}

pub fn rollout(spec: &ProblemSpec, u: &[f64]) -> Result<Rollout> {
    check_dim("control sequence", spec.num_inputs(), u.len())?;
    let nu = spec.nu();
    let n_stages = spec.horizon;
    let mut states = Vec::with_capacity(n_stages + 1);
    let mut steps = Vec::with_capacity(n_stages);
    let mut soft = Vec::with_capacity(n_stages + 1);
    let mut cost = 0.0;
    let mut x = spec.x_bar.clone();

    for (n, un) in u.chunks(nu).enumerate() {
        let sp = soft_at(spec, n, &x, Some(un))?;
        cost += sp.value;
        soft.push(sp);
        let (x_next, record) = match &spec.dynamics {
            Dynamics::Continuous(model) => {
                let step =
                    rk4_step(model.as_ref(), &x, un, spec.ts).map_err(|e| stage_error(e, n))?;
                (step.x_next.clone(), StepRecord::Rk4(step))
            }
            Dynamics::Discrete(model) => {
                let (x_next, stage_cost) = model.step(n, &x, un)?;
                if !x_next.iter().all(|v| v.is_finite()) || !stage_cost.is_finite() {
                    return Err(Error::NonFinite {
                        context: "discrete dynamics",
                        stage: n,
                    });
                }
                (x_next.clone(), StepRecord::Discrete { x_next, stage_cost })
            }
        };
        cost += record.stage_cost();
        steps.push(record);
        states.push(std::mem::replace(&mut x, x_next));
    }

    let sp = soft_at(spec, n_stages, &x, None)?;
    cost += sp.value;
    soft.push(sp);
    let terminal_cost = spec.terminal.as_ref().map_or(0.0, |t| t.value(&x));
    cost += terminal_cost;
    states.push(x);

    if !cost.is_finite() {
        return Err(Error::NonFinite {
            context: "rollout cost",
            stage: n_stages,
        });
    }
    Ok(Rollout {
        inputs: u.to_vec(),
        states,
        steps,
        soft,
        terminal_cost,
        cost,
    })
}

fn stage_error(err: Error, stage: usize) -> Error {
    match err {
        Error::NonFinite { context, .. } => Error::NonFinite { context, stage },
        other => other,
    }
}

/// `∇ℓ(u)` by the backward sweep over a rollout of the same `u`.
pub fn gradient(spec: &ProblemSpec, roll: &Rollout) -> Result<Vec<f64>> {
    let nx = spec.nx();
    let nu = spec.nu();
    let n_stages = spec.horizon;
    let mut grad = vec![0.0; n_stages * nu];

    let x_n = &roll.states[n_stages];
    let mut p = vec![0.0; nx];
    if let Some(t) = &spec.terminal {
        t.gradient(x_n, &mut p);
    }
    if let Some(soft) = &spec.soft {
        let q = &roll.soft[n_stages].q;
        if !q.is_empty() {
            soft.map
                .vjp_accumulate(n_stages, x_n, None, q, &mut p, None);
        }
    }

    for n in (0..n_stages).rev() {
        let x = &roll.states[n];
        let un = &roll.inputs[n * nu..(n + 1) * nu];
        let (mut adj_x, mut adj_u) = match (&spec.dynamics, &roll.steps[n]) {
            (Dynamics::Continuous(model), StepRecord::Rk4(step)) => {
                rk4_step_vjp(step, model.as_ref(), un, spec.ts, &p, 1.0)
                    .map_err(|e| stage_error(e, n))?
            }
            (Dynamics::Discrete(model), StepRecord::Discrete { .. }) => {
                model.step_vjp(n, x, un, &p, 1.0)?
            }
            _ => unreachable!("rollout produced by a different dynamics kind"),
        };
        if let Some(soft) = &spec.soft {
            let q = &roll.soft[n].q;
            if !q.is_empty() {
                soft.map
                    .vjp_accumulate(n, x, Some(un), q, &mut adj_x, Some(&mut adj_u));
            }
        }
        grad[n * nu..(n + 1) * nu].copy_from_slice(&adj_u);
        p = adj_x;
    }
    if !grad.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            context: "gradient",
            stage: 0,
        });
    }
    Ok(grad)
}

pub fn cost_and_gradient(spec: &ProblemSpec, u: &[f64]) -> Result<(f64, Vec<f64>)> {
    let roll = rollout(spec, u)?;
    let grad = gradient(spec, &roll)?;
    Ok((roll.cost, grad))
}

impl Composite for ProblemSpec {
    fn dim(&self) -> usize {
        self.num_inputs()
    }

    fn cost(&self, u: &[f64]) -> Result<f64> {
        rollout(self, u).map(|r| r.cost)
    }

    fn cost_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        let (cost, g) = cost_and_gradient(self, u)?;
        grad.copy_from_slice(&g);
        Ok(cost)
    }

    fn prox(&self, v: &[f64], gamma: f64, out: &mut [f64]) -> f64 {
        let nu = self.nu();
        v.chunks(nu)
            .zip(out.chunks_mut(nu))
            .map(|(vb, ob)| self.g.prox_into(vb, gamma, ob))
            .sum()
    }

    fn penalty(&self, u: &[f64]) -> f64 {
        ProblemSpec::penalty(self, u)
    }
}
