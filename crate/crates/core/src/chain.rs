//! Chain of `M` point masses connected by springs, fixed at the origin and
//! driven by the velocity of a free handle at the far end.
//!
//! State layout: positions `p¹ … p^{M+1}` (the last one is the handle)
//! followed by velocities `v¹ … v^M`, three coordinates each, so
//! `n_x = 3(2M + 1)` and `n_u = 3`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::integrator::rk4_step;
use crate::problem::{
    validate, ConstraintMap, ContinuousModel, Dynamics, ProblemSpec, SoftConstraintSpec, SoftStage,
};
use crate::prox::ProxSpec;

/// Coordinate (zero-based) bounded from below by the soft constraint.
pub const SOFT_AXIS: usize = 1;

const MIN_SPRING_LENGTH: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainParams {
    /// Number of free masses `M`.
    pub masses: usize,
    /// Mass of each body (kg).
    pub mass: f64,
    /// Spring constant (N/m).
    pub spring_constant: f64,
    /// Spring rest length (m).
    pub rest_length: f64,
    /// Weight on the handle position error.
    pub beta: f64,
    /// Weight on the mass velocities.
    pub gamma: f64,
    /// Weight on the input.
    pub delta: f64,
    /// Soft-constraint weights, one per position `p¹ … p^{M+1}`.
    pub mu: Vec<f64>,
    /// Handle reference position (m).
    pub p_end: [f64; 3],
    /// Lower bound on the second coordinate of every position (m).
    pub bound: f64,
    /// Gravitational acceleration (m/s²).
    pub gravity: [f64; 3],
    /// Input box `‖u‖∞ ≤ input_bound`.
    pub input_bound: f64,
    /// Constant input used to push the chain away from equilibrium.
    pub perturbation: [f64; 3],
    /// Duration of the perturbation (s).
    pub perturbation_time: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            masses: 5,
            mass: 0.03,
            spring_constant: 0.1,
            rest_length: 0.033,
            beta: 1.0,
            gamma: 1.0,
            delta: 0.01,
            mu: vec![100.0, 100.0, 100.0, 10.0, 10.0, 10.0],
            p_end: [1.0, 0.0, 0.0],
            bound: -0.1,
            gravity: [0.0, 0.0, -9.81],
            input_bound: 1.0,
            perturbation: [-1.0, 1.0, 1.0],
            perturbation_time: 1.0,
        }
    }
}

impl ChainParams {
    pub fn with_masses(masses: usize) -> Self {
        ChainParams {
            masses,
            mu: (0..=masses)
                .map(|i| if i < 3 { 100.0 } else { 10.0 })
                .collect(),
            ..ChainParams::default()
        }
    }

    pub fn state_dim(&self) -> usize {
        3 * (2 * self.masses + 1)
    }

    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.masses < 1 {
            out.push("chain needs at least one mass".into());
        }
        if !(self.mass > 0.0) {
            out.push("mass must be positive".into());
        }
        if !(self.spring_constant > 0.0) {
            out.push("spring constant must be positive".into());
        }
        if !(self.rest_length >= 0.0) {
            out.push("rest length must be nonnegative".into());
        }
        if !(self.beta >= 0.0 && self.gamma >= 0.0 && self.delta >= 0.0) {
            out.push("cost weights must be nonnegative".into());
        }
        if self.mu.len() != self.masses + 1 {
            out.push(format!(
                "mu has {} entries, expected M+1 = {}",
                self.mu.len(),
                self.masses + 1
            ));
        }
        if self.mu.iter().any(|m| !(*m >= 0.0)) {
            out.push("mu entries must be nonnegative".into());
        }
        if !(self.input_bound > 0.0) {
            out.push("input bound must be positive".into());
        }
        out
    }
}

/// Positions and velocities of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    /// `p¹ … p^{M+1}`.
    pub positions: Vec<[f64; 3]>,
    /// `v¹ … v^M`.
    pub velocities: Vec<[f64; 3]>,
}

impl ChainState {
    pub fn from_vector(x: &[f64], masses: usize) -> Self {
        let positions = (0..=masses).map(|i| block(x, i)).collect();
        let velocities = (0..masses).map(|i| block(x, masses + 1 + i)).collect();
        ChainState {
            positions,
            velocities,
        }
    }

    pub fn to_vector(&self) -> Vec<f64> {
        self.positions
            .iter()
            .chain(&self.velocities)
            .flat_map(|b| b.iter().copied())
            .collect()
    }
}

fn block(x: &[f64], i: usize) -> [f64; 3] {
    [x[3 * i], x[3 * i + 1], x[3 * i + 2]]
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// The continuous-time chain model with its quadratic running cost.
#[derive(Debug, Clone)]
pub struct ChainModel {
    pub params: ChainParams,
}

impl ChainModel {
    pub fn new(params: ChainParams) -> Self {
        ChainModel { params }
    }

    /// `p^i` for `i = 0 ..= M+1`, with `p⁰` the fixed origin.
    fn position(&self, x: &[f64], i: usize) -> [f64; 3] {
        if i == 0 {
            [0.0; 3]
        } else {
            block(x, i - 1)
        }
    }

    /// Spring `j` joins `p^j` and `p^{j+1}`; returns `Δ = p^{j+1} − p^j` and
    /// its length.
    fn spring(&self, x: &[f64], j: usize) -> Result<([f64; 3], f64)> {
        let d = sub3(self.position(x, j + 1), self.position(x, j));
        let len = dot3(d, d).sqrt();
        if !(len >= MIN_SPRING_LENGTH) {
            return Err(Error::Singular {
                index: j,
                next: j + 1,
            });
        }
        Ok((d, len))
    }

    fn force(&self, d: [f64; 3], len: f64) -> [f64; 3] {
        let c = self.params.spring_constant * (1.0 - self.params.rest_length / len);
        [c * d[0], c * d[1], c * d[2]]
    }

    /// `(∂F/∂Δ) c`; the Jacobian is symmetric.
    fn force_jvp(&self, d: [f64; 3], len: f64, c: [f64; 3]) -> [f64; 3] {
        let k = self.params.spring_constant;
        let l = self.params.rest_length;
        let a = k * (1.0 - l / len);
        let b = k * l * dot3(d, c) / (len * len * len);
        [
            a * c[0] + b * d[0],
            a * c[1] + b * d[1],
            a * c[2] + b * d[2],
        ]
    }

    /// Net internal force on each free mass, `F_{i,i+1} − F_{i−1,i}`.
    fn internal_forces(&self, x: &[f64]) -> Result<Vec<[f64; 3]>> {
        let m = self.params.masses;
        let mut out = vec![[0.0; 3]; m];
        for j in 0..=m {
            let (d, len) = self.spring(x, j)?;
            let f = self.force(d, len);
            for c in 0..3 {
                if j >= 1 {
                    out[j - 1][c] += f[c];
                }
                if j < m {
                    out[j][c] -= f[c];
                }
            }
        }
        Ok(out)
    }

    fn vel_offset(&self) -> usize {
        3 * (self.params.masses + 1)
    }
}

impl ContinuousModel for ChainModel {
    fn state_dim(&self) -> usize {
        self.params.state_dim()
    }

    fn input_dim(&self) -> usize {
        3
    }

    fn dynamics(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()> {
        let m = self.params.masses;
        let vo = self.vel_offset();
        dx[..3 * m].copy_from_slice(&x[vo..]);
        dx[3 * m..vo].copy_from_slice(u);
        let forces = self.internal_forces(x)?;
        for (i, f) in forces.iter().enumerate() {
            for c in 0..3 {
                dx[vo + 3 * i + c] = f[c] / self.params.mass + self.params.gravity[c];
            }
        }
        Ok(())
    }

    fn dynamics_vjp(
        &self,
        x: &[f64],
        _u: &[f64],
        w: &[f64],
        adj_x: &mut [f64],
        adj_u: &mut [f64],
    ) -> Result<()> {
        let m = self.params.masses;
        let vo = self.vel_offset();
        adj_x.iter_mut().for_each(|v| *v = 0.0);
        // ṗ^i = v^i
        adj_x[vo..].copy_from_slice(&w[..3 * m]);
        // ṗ^{M+1} = u
        adj_u.copy_from_slice(&w[3 * m..vo]);
        // spring j enters the acceleration of mass j with + and of mass j+1 with −
        let lam = |i: usize| -> [f64; 3] {
            if i == 0 || i > m {
                [0.0; 3]
            } else {
                let b = block(&w[vo..], i - 1);
                let s = 1.0 / self.params.mass;
                [s * b[0], s * b[1], s * b[2]]
            }
        };
        for j in 0..=m {
            let (d, len) = self.spring(x, j)?;
            let c = sub3(lam(j), lam(j + 1));
            let g = self.force_jvp(d, len, c);
            for k in 0..3 {
                adj_x[3 * j + k] += g[k];
                if j >= 1 {
                    adj_x[3 * (j - 1) + k] -= g[k];
                }
            }
        }
        Ok(())
    }

    fn running_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        let p = &self.params;
        let m = p.masses;
        let handle = sub3(block(x, m), p.p_end);
        let vel: f64 = x[self.vel_offset()..].iter().map(|v| v * v).sum();
        let uu: f64 = u.iter().map(|v| v * v).sum();
        p.beta * dot3(handle, handle) + p.gamma * vel + p.delta * uu
    }

    fn running_cost_grad(&self, x: &[f64], u: &[f64], grad_x: &mut [f64], grad_u: &mut [f64]) {
        let p = &self.params;
        let m = p.masses;
        let vo = self.vel_offset();
        grad_x.iter_mut().for_each(|v| *v = 0.0);
        let handle = sub3(block(x, m), p.p_end);
        for c in 0..3 {
            grad_x[3 * m + c] = 2.0 * p.beta * handle[c];
        }
        for (g, v) in grad_x[vo..].iter_mut().zip(&x[vo..]) {
            *g = 2.0 * p.gamma * v;
        }
        for (g, v) in grad_u.iter_mut().zip(u) {
            *g = 2.0 * p.delta * v;
        }
    }
}

/// `C(x) = (p¹₂, …, p^{M+1}₂)`: the bounded coordinate of every position.
#[derive(Debug, Clone, Copy)]
pub struct ChainSoftMap {
    pub masses: usize,
}

impl ConstraintMap for ChainSoftMap {
    fn output_dim(&self, _stage: usize) -> usize {
        self.masses + 1
    }

    fn eval(&self, _stage: usize, x: &[f64], _u: Option<&[f64]>, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = x[3 * i + SOFT_AXIS];
        }
    }

    fn vjp_accumulate(
        &self,
        _stage: usize,
        _x: &[f64],
        _u: Option<&[f64]>,
        w: &[f64],
        adj_x: &mut [f64],
        _adj_u: Option<&mut [f64]>,
    ) {
        for (i, wi) in w.iter().enumerate() {
            adj_x[3 * i + SOFT_AXIS] += wi;
        }
    }
}

/// `ẋ(x, u)` for the chain.
pub fn chain_dynamics(params: &ChainParams, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_dim("chain state", params.state_dim(), x.len())?;
    check_dim("chain input", 3, u.len())?;
    let mut dx = vec![0.0; x.len()];
    ChainModel::new(params.clone()).dynamics(x, u, &mut dx)?;
    Ok(dx)
}

/// Transpose-Jacobian of the chain dynamics applied to `w`.
pub fn chain_vjps(
    params: &ChainParams,
    x: &[f64],
    u: &[f64],
    w: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim("chain state", params.state_dim(), x.len())?;
    check_dim("chain adjoint", params.state_dim(), w.len())?;
    let mut ax = vec![0.0; x.len()];
    let mut au = vec![0.0; 3];
    ChainModel::new(params.clone()).dynamics_vjp(x, u, w, &mut ax, &mut au)?;
    Ok((ax, au))
}

/// Running cost with its gradients.
pub fn chain_stage_cost(params: &ChainParams, x: &[f64], u: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let model = ChainModel::new(params.clone());
    let mut gx = vec![0.0; x.len()];
    let mut gu = vec![0.0; u.len()];
    model.running_cost_grad(x, u, &mut gx, &mut gu);
    (model.running_cost(x, u), gx, gu)
}

pub fn chain_soft_outputs(params: &ChainParams, x: &[f64]) -> Vec<f64> {
    let map = ChainSoftMap {
        masses: params.masses,
    };
    let mut out = vec![0.0; params.masses + 1];
    map.eval(0, x, None, &mut out);
    out
}

/// Net force on the free masses at rest, `F_{i,i+1} − F_{i−1,i} + m a`.
fn static_residual(model: &ChainModel, x: &[f64]) -> Result<Vec<f64>> {
    let forces = model.internal_forces(x)?;
    let p = &model.params;
    Ok(forces
        .iter()
        .flat_map(|f| (0..3).map(move |c| f[c] + p.mass * p.gravity[c]))
        .collect())
}

/// Static equilibrium with the handle held at `p_end`, by damped Newton on the
/// stacked force balance with a central-difference Jacobian.
pub fn compute_equilibrium(params: &ChainParams, p_end: [f64; 3]) -> Result<ChainState> {
    let bad = params.check();
    if !bad.is_empty() {
        return Err(Error::Config(bad.join("; ")));
    }
    if params.rest_length > 0.0 && dot3(p_end, p_end) == 0.0 {
        return Err(Error::Config("p_end must differ from the origin".into()));
    }
    const MAX_ITER: usize = 200;
    const TOL: f64 = 1e-9;
    let m = params.masses;
    let model = ChainModel::new(params.clone());
    let n = 3 * m;

    // straight segment from the origin to the handle
    let mut x = vec![0.0; params.state_dim()];
    for i in 1..=m + 1 {
        for c in 0..3 {
            x[3 * (i - 1) + c] = p_end[c] * i as f64 / (m + 1) as f64;
        }
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut res = static_residual(&model, &x)?;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let inf = res.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        if inf <= 1e-13 {
            break;
        }
        iterations += 1;
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let h = 1e-6 * (1.0 + x[j].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let rp = static_residual(&model, &xp)?;
            let rm = static_residual(&model, &xm)?;
            for i in 0..n {
                jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let Some(step) = jac.lu().solve(&DVector::from_column_slice(&res)) else {
            break;
        };
        let r0 = norm(&res);
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let mut cand = x.clone();
            for j in 0..n {
                cand[j] -= t * step[j];
            }
            if let Ok(rc) = static_residual(&model, &cand) {
                if norm(&rc) < r0 {
                    x = cand;
                    res = rc;
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let inf = res.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    if inf > TOL {
        return Err(Error::EquilibriumNotConverged {
            residual: inf,
            iterations,
        });
    }
    Ok(ChainState::from_vector(&x, m))
}

/// Initial state, reference equilibrium and the assembled optimal control
/// problem of the chain benchmark.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: ChainParams,
    pub x0: Vec<f64>,
    pub x_ref: Vec<f64>,
    pub perturbation_steps: usize,
    pub spec: ProblemSpec,
}

impl Scenario {
    pub fn model(&self) -> ChainModel {
        ChainModel::new(self.params.clone())
    }
}

/// Assembles the problem for a chain starting at `x_bar`.
pub fn chain_problem(
    params: &ChainParams,
    x_bar: Vec<f64>,
    ts: f64,
    horizon: usize,
) -> ProblemSpec {
    let stage = SoftStage {
        lower_bounds: vec![params.bound; params.masses + 1],
        mu: params.mu.clone(),
    };
    ProblemSpec {
        horizon,
        dynamics: Dynamics::Continuous(Arc::new(ChainModel::new(params.clone()))),
        terminal: None,
        soft: Some(SoftConstraintSpec {
            map: Arc::new(ChainSoftMap {
                masses: params.masses,
            }),
            stages: vec![stage; horizon + 1],
        }),
        g: ProxSpec::InfBall {
            radius: params.input_bound,
        },
        x_bar,
        ts,
    }
}

pub fn build_scenario(params: &ChainParams, ts: f64, horizon: usize) -> Result<Scenario> {
    if !(ts > 0.0) || horizon < 1 {
        return Err(Error::Config(format!(
            "need ts > 0 and N >= 1, got ts = {ts}, N = {horizon}"
        )));
    }
    let x_ref = compute_equilibrium(params, params.p_end)?.to_vector();
    let model = ChainModel::new(params.clone());
    let steps = (params.perturbation_time / ts).round() as usize;
    let mut x0 = x_ref.clone();
    for _ in 0..steps {
        x0 = rk4_step(&model, &x0, &params.perturbation, ts)?.x_next;
    }
    let spec = chain_problem(params, x0.clone(), ts, horizon);
    validate(&spec).into_result()?;
    Ok(Scenario {
        params: params.clone(),
        x0,
        x_ref,
        perturbation_steps: steps,
        spec,
    })
}
