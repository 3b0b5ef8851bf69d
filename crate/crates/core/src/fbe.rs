//! Forward-backward step, fixed-point residual and the forward-backward
//! envelope
//!
//! ```text
//! φ_γ(u) = ℓ(u) − (γ/2)‖∇ℓ(u)‖² + g^γ(u − γ∇ℓ(u))
//!        = ℓ(u) + ⟨∇ℓ(u), ū − u⟩ + g(ū) + ‖ū − u‖²/(2γ),   ū = prox_{γg}(u − γ∇ℓ(u))
//! ```
//!
//! The solvers use the second (prox-point) form since `ū` and `g(ū)` are
//! already at hand; [`fbe_at`] evaluates the first form.

use crate::error::{Error, Result};
use crate::linalg::{self, dist_sq, dot, norm_sq};
use crate::problem::Composite;

/// Default fraction of the admissible range used for the line-search
/// coefficient: `σ = SIGMA_FRACTION · γ(1 − γL)/2`.
pub const SIGMA_FRACTION: f64 = 0.1;

/// One forward-backward step at `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct FbStep {
    pub u: Vec<f64>,
    pub grad: Vec<f64>,
    /// `ℓ(u)`.
    pub cost: f64,
    /// `prox_{γg}(u − γ∇ℓ(u))`.
    pub u_bar: Vec<f64>,
    /// `g(ū)`.
    pub g_bar: f64,
    /// `(u − ū)/γ`.
    pub r: Vec<f64>,
    pub gamma: f64,
    /// `φ_γ(u)`.
    pub fbe: f64,
}

impl FbStep {
    pub fn res_inf(&self) -> f64 {
        linalg::norm_inf(&self.r)
    }

    pub fn res_norm_sq(&self) -> f64 {
        norm_sq(&self.r)
    }
}

/// Builds the step from an already evaluated `(ℓ(u), ∇ℓ(u))`.
pub fn fb_step_from<P: Composite + ?Sized>(
    problem: &P,
    u: Vec<f64>,
    cost: f64,
    grad: Vec<f64>,
    gamma: f64,
) -> FbStep {
    let fwd: Vec<f64> = u.iter().zip(&grad).map(|(x, g)| x - gamma * g).collect();
    let mut u_bar = vec![0.0; u.len()];
    let g_bar = problem.prox(&fwd, gamma, &mut u_bar);
    let r: Vec<f64> = u
        .iter()
        .zip(&u_bar)
        .map(|(x, xb)| (x - xb) / gamma)
        .collect();
    let diff_dot: f64 = grad
        .iter()
        .zip(u_bar.iter().zip(&u))
        .map(|(g, (b, x))| g * (b - x))
        .sum();
    let fbe = cost + diff_dot + g_bar + dist_sq(&u_bar, &u) / (2.0 * gamma);
    FbStep {
        u,
        grad,
        cost,
        u_bar,
        g_bar,
        r,
        gamma,
        fbe,
    }
}

pub fn fb_step<P: Composite + ?Sized>(problem: &P, u: &[f64], gamma: f64) -> Result<FbStep> {
    let mut grad = vec![0.0; u.len()];
    let cost = problem.cost_and_gradient(u, &mut grad)?;
    if !cost.is_finite() || !linalg::all_finite(&grad) {
        return Err(Error::NonFinite {
            context: "forward-backward step",
            stage: 0,
        });
    }
    Ok(fb_step_from(problem, u.to_vec(), cost, grad, gamma))
}

/// `φ_γ(u)` through the Moreau envelope of `g`.
pub fn fbe_at<P: Composite + ?Sized>(problem: &P, u: &[f64], gamma: f64) -> Result<f64> {
    let mut grad = vec![0.0; u.len()];
    let cost = problem.cost_and_gradient(u, &mut grad)?;
    let fwd: Vec<f64> = u.iter().zip(&grad).map(|(x, g)| x - gamma * g).collect();
    let mut p = vec![0.0; u.len()];
    let gp = problem.prox(&fwd, gamma, &mut p);
    let envelope = gp + dist_sq(&p, &fwd) / (2.0 * gamma);
    Ok(cost - 0.5 * gamma * norm_sq(&grad) + envelope)
}

/// Step size, Lipschitz estimate and line-search coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaState {
    pub gamma: f64,
    pub lipschitz: f64,
    pub sigma: f64,
    pub halvings: usize,
}

impl GammaState {
    /// `γ = ratio / L`, `σ = SIGMA_FRACTION · γ(1 − γL)/2`.
    pub fn new(lipschitz: f64, ratio: f64) -> Self {
        assert!(ratio > 0.0 && ratio < 1.0, "γL must lie in (0, 1)");
        let gamma = ratio / lipschitz;
        GammaState {
            gamma,
            lipschitz,
            sigma: SIGMA_FRACTION * 0.5 * gamma * (1.0 - ratio),
            halvings: 0,
        }
    }

    /// Estimates `L` from a gradient difference along a fixed pseudo-random
    /// perturbation of norm `1e-3 (1 + ‖u₀‖)`.
    pub fn estimate<P: Composite + ?Sized>(
        problem: &P,
        u0: &[f64],
        grad0: &[f64],
        ratio: f64,
    ) -> Result<Self> {
        let mut delta: Vec<f64> = (0..u0.len()).map(perturbation).collect();
        let target = 1e-3 * (1.0 + linalg::norm(u0));
        let scale = target / linalg::norm(&delta);
        linalg::scale(scale, &mut delta);
        let shifted: Vec<f64> = u0.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let mut g1 = vec![0.0; u0.len()];
        problem.cost_and_gradient(&shifted, &mut g1)?;
        let lip = (linalg::dist_sq(&g1, grad0).sqrt() / target).max(1e-10);
        if !lip.is_finite() {
            return Err(Error::NonFinite {
                context: "Lipschitz estimate",
                stage: 0,
            });
        }
        Ok(Self::new(lip, ratio))
    }

    pub fn halve(&mut self) {
        self.gamma *= 0.5;
        self.lipschitz *= 2.0;
        self.sigma *= 0.5;
        self.halvings += 1;
    }
}

/// Deterministic values in `[0.5, 1.5]` with alternating signs.
fn perturbation(i: usize) -> f64 {
    let mut z = (i as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let unit = (z >> 11) as f64 / (1u64 << 53) as f64;
    let sign = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * (0.5 + unit)
}

/// Whether `ℓ(ū) ≤ ℓ(u) − γ⟨∇ℓ(u), r⟩ + (L/2)‖γr‖²` holds.
pub fn quadratic_bound_holds(step: &FbStep, cost_bar: f64, lipschitz: f64) -> bool {
    if !cost_bar.is_finite() {
        return false;
    }
    let gr = step.gamma * dot(&step.grad, &step.r);
    let rhs = step.cost - gr + 0.5 * lipschitz * step.gamma * step.gamma * step.res_norm_sq();
    cost_bar <= rhs + 10.0 * f64::EPSILON * step.cost.abs()
}

/// Halves `γ` (doubling `L`, halving `σ`) until the quadratic upper bound
/// holds at `ū`. The gradient at `u` is reused; only the prox is redone.
///
/// Returns the new state, the accepted step, `ℓ(ū)` and whether anything
/// changed.
pub fn ensure_gamma<P: Composite + ?Sized>(
    problem: &P,
    state: GammaState,
    step: FbStep,
    max_halvings: usize,
) -> Result<(GammaState, FbStep, f64, bool)> {
    let mut state = state;
    let mut step = step;
    let mut changed = false;
    let mut count = 0;
    loop {
        let cost_bar = problem.cost(&step.u_bar).unwrap_or(f64::INFINITY);
        if quadratic_bound_holds(&step, cost_bar, state.lipschitz) {
            return Ok((state, step, cost_bar, changed));
        }
        if count == max_halvings {
            return Err(Error::LipschitzDiverged(count));
        }
        state.halve();
        count += 1;
        changed = true;
        let FbStep { u, grad, cost, .. } = step;
        step = fb_step_from(problem, u, cost, grad, state.gamma);
    }
}
