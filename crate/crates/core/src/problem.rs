//! Composite optimal control problems in single-shooting form.
//!
//! A [`ProblemSpec`] bundles the dynamics, stage and terminal costs, the
//! soft state constraints and the stagewise input penalty. Once validated it
//! is immutable and can be shared across threads.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::prox::ProxSpec;

/// Problem dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims {
    /// Number of stages `N`.
    pub horizon: usize,
    pub nx: usize,
    pub nu: usize,
    /// Soft-constraint output dimension per stage, `N + 1` entries.
    pub soft: Vec<usize>,
}

/// Continuous-time dynamics `ẋ = f_c(x, u)` and running cost `ℓ_c(x, u)`,
/// with transpose-Jacobian products.
///
/// Implementations must be reentrant.
pub trait ContinuousModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    /// Writes `f_c(x, u)` into `dx`.
    fn dynamics(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()>;

    /// Writes `(∂f_c/∂x)ᵀ w` into `adj_x` and `(∂f_c/∂u)ᵀ w` into `adj_u`.
    fn dynamics_vjp(
        &self,
        x: &[f64],
        u: &[f64],
        w: &[f64],
        adj_x: &mut [f64],
        adj_u: &mut [f64],
    ) -> Result<()>;

    fn running_cost(&self, x: &[f64], u: &[f64]) -> f64;

    /// Writes `∇ₓℓ_c` and `∇ᵤℓ_c`.
    fn running_cost_grad(&self, x: &[f64], u: &[f64], grad_x: &mut [f64], grad_u: &mut [f64]);
}

/// Pre-discretized stage maps `x⁺ = f_n(x, u)` and stage cost `ℓ_n(x, u)`.
pub trait DiscreteModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    /// Returns `(f_n(x, u), ℓ_n(x, u))`.
    fn step(&self, stage: usize, x: &[f64], u: &[f64]) -> Result<(Vec<f64>, f64)>;

    /// Transpose-Jacobian of `(f_n, ℓ_n)` with respect to `(x, u)` applied to
    /// `(w_x, w_c)`.
    fn step_vjp(
        &self,
        stage: usize,
        x: &[f64],
        u: &[f64],
        w_x: &[f64],
        w_c: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// Terminal cost `ℓ_N(x)`.
pub trait TerminalCost: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
}

/// Smooth constraint maps `C_n(x, u)` (and `C_N(x)` at the last stage).
pub trait ConstraintMap: Send + Sync {
    /// Output dimension at `stage`.
    fn output_dim(&self, stage: usize) -> usize;

    /// `u` is `None` at the terminal stage.
    fn eval(&self, stage: usize, x: &[f64], u: Option<&[f64]>, out: &mut [f64]);

    /// Accumulates `(∂C/∂x)ᵀ w` into `adj_x` and, if present, `(∂C/∂u)ᵀ w`
    /// into `adj_u`.
    fn vjp_accumulate(
        &self,
        stage: usize,
        x: &[f64],
        u: Option<&[f64]>,
        w: &[f64],
        adj_x: &mut [f64],
        adj_u: Option<&mut [f64]>,
    );
}

/// Lower bounds and penalty weights of the soft constraint at one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftStage {
    pub lower_bounds: Vec<f64>,
    pub mu: Vec<f64>,
}

/// Soft state constraints `C_n(x, u) ≥ b_n`, smoothed by their Moreau envelope
/// with per-component weights.
#[derive(Clone)]
pub struct SoftConstraintSpec {
    pub map: Arc<dyn ConstraintMap>,
    /// One entry per stage `0..=N`. An empty stage means no constraint there.
    pub stages: Vec<SoftStage>,
}

impl fmt::Debug for SoftConstraintSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SoftConstraintSpec")
            .field("stages", &self.stages)
            .finish_non_exhaustive()
    }
}

/// How the stage maps are obtained.
#[derive(Clone)]
pub enum Dynamics {
    /// Discretized internally with one RK4 step per sample.
    Continuous(Arc<dyn ContinuousModel>),
    Discrete(Arc<dyn DiscreteModel>),
}

impl Dynamics {
    pub fn state_dim(&self) -> usize {
        match self {
            Dynamics::Continuous(m) => m.state_dim(),
            Dynamics::Discrete(m) => m.state_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Dynamics::Continuous(m) => m.input_dim(),
            Dynamics::Discrete(m) => m.input_dim(),
        }
    }
}

impl fmt::Debug for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dynamics::Continuous(_) => f.write_str("Dynamics::Continuous(..)"),
            Dynamics::Discrete(_) => f.write_str("Dynamics::Discrete(..)"),
        }
    }
}

/// The optimal control problem
///
/// ```text
/// minimize  Σ_{n<N} ℓ_n(x_n, u_n) + g(u_n) + h_n^{1/μ}(C_n(x_n, u_n))
///           + ℓ_N(x_N) + h_N^{1/μ}(C_N(x_N))
/// s.t.      x_0 = x̄,  x_{n+1} = f_n(x_n, u_n)
/// ```
#[derive(Clone)]
pub struct ProblemSpec {
    pub horizon: usize,
    pub dynamics: Dynamics,
    pub terminal: Option<Arc<dyn TerminalCost>>,
    pub soft: Option<SoftConstraintSpec>,
    /// Stage-uniform input penalty, applied to each `u_n` block.
    pub g: ProxSpec,
    pub x_bar: Vec<f64>,
    /// Sampling time in seconds.
    pub ts: f64,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("dims", &self.dims())
            .field("dynamics", &self.dynamics)
            .field("soft", &self.soft)
            .field("g", &self.g)
            .field("ts", &self.ts)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn dims(&self) -> Dims {
        let soft = match &self.soft {
            Some(s) => s.stages.iter().map(|st| st.mu.len()).collect(),
            None => vec![0; self.horizon + 1],
        };
        Dims {
            horizon: self.horizon,
            nx: self.dynamics.state_dim(),
            nu: self.dynamics.input_dim(),
            soft,
        }
    }

    pub fn nx(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn nu(&self) -> usize {
        self.dynamics.input_dim()
    }

    /// Length of the decision vector, `N · n_u`.
    pub fn num_inputs(&self) -> usize {
        self.horizon * self.nu()
    }

    /// `g(u) = Σ_n g_n(u_n)`.
    pub fn penalty(&self, u: &[f64]) -> f64 {
        u.chunks(self.nu()).map(|b| self.g.value(b)).sum()
    }

    /// Same problem from a different initial state.
    pub fn with_initial_state(&self, x_bar: Vec<f64>) -> Self {
        ProblemSpec {
            x_bar,
            ..self.clone()
        }
    }
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            Err(Error::Validation(self.failures))
        }
    }
}

pub fn validate(spec: &ProblemSpec) -> ValidationReport {
    let mut failures = Vec::new();
    let nx = spec.nx();
    let nu = spec.nu();
    if spec.horizon < 1 {
        failures.push("horizon N must be at least 1".to_string());
    }
    if nx < 1 {
        failures.push("state dimension must be at least 1".to_string());
    }
    if nu < 1 {
        failures.push("input dimension must be at least 1".to_string());
    }
    if !(spec.ts > 0.0) || !spec.ts.is_finite() {
        failures.push("ts must be positive".to_string());
    }
    if spec.x_bar.len() != nx {
        failures.push(format!(
            "x_bar has dimension {}, expected {nx}",
            spec.x_bar.len()
        ));
    } else if !spec.x_bar.iter().all(|v| v.is_finite()) {
        failures.push("x_bar must be finite".to_string());
    }
    failures.extend(spec.g.check(nu));
    if let Some(soft) = &spec.soft {
        if soft.stages.len() != spec.horizon + 1 {
            failures.push(format!(
                "soft constraints list {} stages, expected N+1 = {}",
                soft.stages.len(),
                spec.horizon + 1
            ));
        }
        for (n, st) in soft.stages.iter().enumerate() {
            if st.mu.is_empty() && st.lower_bounds.is_empty() {
                continue;
            }
            let m = soft.map.output_dim(n);
            if st.mu.len() != m {
                failures.push(format!(
                    "stage {n}: mu has length {}, expected m_n = {m}",
                    st.mu.len()
                ));
            }
            if st.lower_bounds.len() != m {
                failures.push(format!(
                    "stage {n}: lower bounds have length {}, expected m_n = {m}",
                    st.lower_bounds.len()
                ));
            }
            if st.mu.iter().any(|&w| !(w >= 0.0)) {
                failures.push(format!("stage {n}: mu components must be nonnegative"));
            }
        }
    }
    ValidationReport { failures }
}

/// A composite objective `φ(u) = ℓ(u) + g(u)` with smooth `ℓ` and a
/// prox-friendly `g`, as seen by the solvers.
pub trait Composite: Sync {
    fn dim(&self) -> usize;

    /// `ℓ(u)`.
    fn cost(&self, u: &[f64]) -> Result<f64>;

    /// Returns `ℓ(u)` and writes `∇ℓ(u)` into `grad`.
    fn cost_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> Result<f64>;

    /// Writes `prox_{γg}(v)` into `out` and returns `g(out)`.
    fn prox(&self, v: &[f64], gamma: f64, out: &mut [f64]) -> f64;

    /// `g(u)`.
    fn penalty(&self, u: &[f64]) -> f64;
}

/// Composite objective from a closure for `ℓ` and a blockwise [`ProxSpec`].
pub struct SmoothComposite<F> {
    dim: usize,
    block: usize,
    smooth: F,
    g: ProxSpec,
}

impl<F> SmoothComposite<F>
where
    F: Fn(&[f64], Option<&mut [f64]>) -> f64 + Sync,
{
    /// `smooth(u, grad)` returns `ℓ(u)` and fills `grad` when given.
    /// `g` is applied to consecutive blocks of length `block`.
    pub fn new(dim: usize, block: usize, g: ProxSpec, smooth: F) -> Self {
        assert!(
            block > 0 && dim.is_multiple_of(block),
            "block must divide dim"
        );
        SmoothComposite {
            dim,
            block,
            smooth,
            g,
        }
    }
}

impl<F> Composite for SmoothComposite<F>
where
    F: Fn(&[f64], Option<&mut [f64]>) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn cost(&self, u: &[f64]) -> Result<f64> {
        Ok((self.smooth)(u, None))
    }

    fn cost_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        Ok((self.smooth)(u, Some(grad)))
    }

    fn prox(&self, v: &[f64], gamma: f64, out: &mut [f64]) -> f64 {
        v.chunks(self.block)
            .zip(out.chunks_mut(self.block))
            .map(|(vb, ob)| self.g.prox_into(vb, gamma, ob))
            .sum()
    }

    fn penalty(&self, u: &[f64]) -> f64 {
        u.chunks(self.block).map(|b| self.g.value(b)).sum()
    }
}

/// Quadratic `ℓ(u) = ½ uᵀQu + cᵀu` with a blockwise penalty. Handy for tests
/// and benchmarks.
pub fn quadratic(
    q: Vec<Vec<f64>>,
    c: Vec<f64>,
    block: usize,
    g: ProxSpec,
) -> SmoothComposite<impl Fn(&[f64], Option<&mut [f64]>) -> f64 + Sync> {
    let n = c.len();
    SmoothComposite::new(n, block, g, move |u: &[f64], grad: Option<&mut [f64]>| {
        let qu: Vec<f64> = q.iter().map(|row| crate::linalg::dot(row, u)).collect();
        if let Some(grad) = grad {
            for i in 0..n {
                grad[i] = qu[i] + c[i];
            }
        }
        0.5 * crate::linalg::dot(u, &qu) + crate::linalg::dot(&c, u)
    })
}
