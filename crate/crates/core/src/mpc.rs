//! Receding-horizon simulation: solve, apply the first input, advance the
//! plant one RK4 step, re-solve.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::batch::Algorithm;
use crate::chain::{chain_soft_outputs, ChainModel, ChainParams, Scenario};
use crate::error::{Error, Result};
use crate::integrator::rk4_step;
use crate::problem::ContinuousModel;
use crate::solver::{SolverOptions, Status};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcOptions {
    /// Simulated time in seconds.
    pub total_time: f64,
    /// Start each solve from the previous solution shifted by one stage.
    pub warm_start: bool,
    pub algorithm: Algorithm,
}

impl Default for MpcOptions {
    fn default() -> Self {
        MpcOptions {
            total_time: 15.0,
            warm_start: false,
            algorithm: Algorithm::Panoc,
        }
    }
}

impl MpcOptions {
    pub fn steps(&self, ts: f64) -> usize {
        (self.total_time / ts).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpcStep {
    pub step: usize,
    pub time_s: f64,
    pub solve_time_s: f64,
    pub iterations: usize,
    pub status: Status,
    /// Input applied at this step.
    pub u0: Vec<f64>,
    /// Plant state when the step's problem was solved.
    pub state: Vec<f64>,
    /// Smallest bounded coordinate over all positions of `state`.
    pub min_p2: f64,
    /// Running cost at `(state, u0)`.
    pub stage_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpcResult {
    pub records: Vec<MpcStep>,
    /// State after the last applied input.
    pub final_state: Vec<f64>,
    pub max_solve_time_s: f64,
    pub mean_solve_time_s: f64,
    pub mean_iterations: f64,
    /// Per position `p¹ … p^{M+1}`, the smallest bounded coordinate over the
    /// whole run including the final state.
    pub min_p2_per_mass: Vec<f64>,
    pub all_converged: bool,
}

impl MpcResult {
    pub fn min_p2(&self) -> f64 {
        self.min_p2_per_mass
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// `u` advanced one stage, repeating the last block.
pub fn shift_inputs(u: &[f64], nu: usize) -> Vec<f64> {
    let mut out = u[nu.min(u.len())..].to_vec();
    out.extend_from_slice(&u[u.len() - nu..]);
    out
}

/// Closed-loop run of the chain from `scenario.x0`. Aborts with
/// [`Error::ClosedLoop`] on the first solve that ends in a numerical error
/// or line-search failure; solves that hit an iteration or time cap are
/// recorded and flagged through `all_converged`.
pub fn simulate(scenario: &Scenario, opts: &SolverOptions, mpc: &MpcOptions) -> Result<MpcResult> {
    let ts = scenario.spec.ts;
    let steps = mpc.steps(ts);
    let params: &ChainParams = &scenario.params;
    let model = ChainModel::new(params.clone());
    let nu = model.input_dim();
    let mut spec = scenario.spec.clone();
    let mut x = scenario.x0.clone();
    let mut u_guess = vec![0.0; spec.num_inputs()];
    let mut records = Vec::with_capacity(steps);
    let mut min_p2 = vec![f64::INFINITY; params.masses + 1];
    let track = |x: &[f64], min_p2: &mut Vec<f64>| {
        for (m, z) in min_p2.iter_mut().zip(chain_soft_outputs(params, x)) {
            *m = m.min(z);
        }
    };

    for k in 0..steps {
        spec.x_bar = x.clone();
        let clock = Instant::now();
        let sol = mpc.algorithm.solve(&spec, &u_guess, opts)?;
        let solve_time_s = clock.elapsed().as_secs_f64();
        if matches!(
            sol.status,
            Status::NumericalError | Status::LinesearchFailure
        ) {
            return Err(Error::ClosedLoop {
                step: k,
                status: sol.status.to_string(),
            });
        }
        let u0 = sol.u_bar[..nu].to_vec();
        track(&x, &mut min_p2);
        let outputs = chain_soft_outputs(params, &x);
        records.push(MpcStep {
            step: k,
            time_s: k as f64 * ts,
            solve_time_s,
            iterations: sol.iterations,
            status: sol.status,
            stage_cost: model.running_cost(&x, &u0),
            min_p2: outputs.iter().copied().fold(f64::INFINITY, f64::min),
            u0: u0.clone(),
            state: x.clone(),
        });
        x = rk4_step(&model, &x, &u0, ts)?.x_next;
        u_guess = if mpc.warm_start {
            shift_inputs(&sol.u_bar, nu)
        } else {
            vec![0.0; spec.num_inputs()]
        };
    }
    track(&x, &mut min_p2);

    let n = records.len().max(1) as f64;
    Ok(MpcResult {
        max_solve_time_s: records.iter().map(|r| r.solve_time_s).fold(0.0, f64::max),
        mean_solve_time_s: records.iter().map(|r| r.solve_time_s).sum::<f64>() / n,
        mean_iterations: records.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
        all_converged: records.iter().all(|r| r.status == Status::Converged),
        min_p2_per_mass: min_p2,
        final_state: x,
        records,
    })
}

pub const MPC_HEADER: &str = "step,time_s,solve_time_s,iterations,status,u0_x,u0_y,u0_z,min_p2";

pub fn write_mpc_csv<W: Write>(records: &[MpcStep], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{MPC_HEADER}")?;
    for r in records {
        write!(
            out,
            "{},{},{},{},{}",
            r.step, r.time_s, r.solve_time_s, r.iterations, r.status
        )?;
        for v in &r.u0 {
            write!(out, ",{v}")?;
        }
        writeln!(out, ",{}", r.min_p2)?;
    }
    Ok(())
}
