//! One-step classical Runge-Kutta discretization with an exact reverse sweep.
//!
//! The running cost is integrated as an extra quadrature state through the
//! same four stages, so `(x_next, stage_cost)` is one smooth map of `(x, u)`
//! and [`rk4_step_vjp`] is its exact transpose-Jacobian.

use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy};
use crate::problem::ContinuousModel;

const WEIGHTS: [f64; 4] = [1.0, 2.0, 2.0, 1.0];

/// Result of one RK4 step together with its tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Rk4Step {
    pub x_next: Vec<f64>,
    /// Integral of the running cost over the step.
    pub stage_cost: f64,
    /// States at which the four stages were evaluated.
    pub stage_states: [Vec<f64>; 4],
}

pub fn rk4_step(model: &dyn ContinuousModel, x: &[f64], u: &[f64], ts: f64) -> Result<Rk4Step> {
    let nx = x.len();
    let mut stage_states: [Vec<f64>; 4] = Default::default();
    let mut k = vec![0.0; nx];
    let mut x_next = x.to_vec();
    let mut stage_cost = 0.0;
    // offset of stage i+1 from x, in units of the previous slope
    let offsets = [0.5 * ts, 0.5 * ts, ts];
    for i in 0..4 {
        let xi = if i == 0 {
            x.to_vec()
        } else {
            let mut xi = x.to_vec();
            axpy(offsets[i - 1], &k, &mut xi);
            xi
        };
        model.dynamics(&xi, u, &mut k)?;
        let c = model.running_cost(&xi, u);
        if !all_finite(&k) || !c.is_finite() {
            return Err(Error::NonFinite {
                context: "rk4 stage",
                stage: i,
            });
        }
        axpy(ts * WEIGHTS[i] / 6.0, &k, &mut x_next);
        stage_cost += ts * WEIGHTS[i] / 6.0 * c;
        stage_states[i] = xi;
    }
    if !all_finite(&x_next) {
        return Err(Error::NonFinite {
            context: "rk4 update",
            stage: 4,
        });
    }
    Ok(Rk4Step {
        x_next,
        stage_cost,
        stage_states,
    })
}

/// Transpose-Jacobian of `(x_next, stage_cost)` with respect to `(x, u)`
/// applied to `(w_x, w_c)`, obtained by reversing the recorded stages.
pub fn rk4_step_vjp(
    step: &Rk4Step,
    model: &dyn ContinuousModel,
    u: &[f64],
    ts: f64,
    w_x: &[f64],
    w_c: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let nx = w_x.len();
    let nu = u.len();
    let mut adj_x = w_x.to_vec();
    let mut adj_u = vec![0.0; nu];

    // adjoint accumulated on each stage slope k_i beyond its direct weight
    let mut carried = vec![0.0; nx];
    let mut lam = vec![0.0; nx];
    let mut lam_u = vec![0.0; nu];
    let mut gx = vec![0.0; nx];
    let mut gu = vec![0.0; nu];
    let offsets = [0.5 * ts, 0.5 * ts, ts];

    for i in (0..4).rev() {
        let xi = &step.stage_states[i];
        let wk = ts * WEIGHTS[i] / 6.0;
        let mut bar_k = w_x.to_vec();
        for (b, c) in bar_k.iter_mut().zip(&carried) {
            *b = wk * *b + c;
        }
        model.dynamics_vjp(xi, u, &bar_k, &mut lam, &mut lam_u)?;
        let bar_c = wk * w_c;
        if bar_c != 0.0 {
            model.running_cost_grad(xi, u, &mut gx, &mut gu);
            axpy(bar_c, &gx, &mut lam);
            axpy(bar_c, &gu, &mut lam_u);
        }
        if !all_finite(&lam) || !all_finite(&lam_u) {
            return Err(Error::NonFinite {
                context: "rk4 reverse stage",
                stage: i,
            });
        }
        axpy(1.0, &lam, &mut adj_x);
        axpy(1.0, &lam_u, &mut adj_u);
        if i > 0 {
            // X_i = x + offset * k_{i-1}
            carried.iter_mut().for_each(|c| *c = 0.0);
            axpy(offsets[i - 1], &lam, &mut carried);
        }
    }
    Ok((adj_x, adj_u))
}
