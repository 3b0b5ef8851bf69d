#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use nmpc_core::chain::{chain_problem, compute_equilibrium, ChainParams};
use nmpc_core::problem::{quadratic, Composite, ProblemSpec};
use nmpc_core::ProxSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Central differences of `ℓ` with step `h · (1 + |u_i|)`.
pub fn fd_gradient<P: Composite + ?Sized>(p: &P, u: &[f64], h: f64) -> Vec<f64> {
    (0..u.len())
        .map(|i| {
            let step = h * (1.0 + u[i].abs());
            let mut up = u.to_vec();
            let mut um = u.to_vec();
            up[i] += step;
            um[i] -= step;
            (p.cost(&up).unwrap() - p.cost(&um).unwrap()) / (2.0 * step)
        })
        .collect()
}

/// `‖a − b‖∞ / ‖b‖∞`.
pub fn rel_err_inf(a: &[f64], b: &[f64]) -> f64 {
    let num = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let den = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    num / den.max(f64::MIN_POSITIVE)
}

/// Chain problem around a perturbed equilibrium. The bounded coordinate is
/// spread over `[−0.4, 0.4]` so the soft penalty is active at some stages.
pub fn random_chain_instance(
    r: &mut ChaCha8Rng,
    masses: usize,
    horizon: usize,
) -> (ProblemSpec, Vec<f64>) {
    let params = ChainParams::with_masses(masses);
    let mut x = compute_equilibrium(&params, params.p_end)
        .unwrap()
        .to_vector();
    let np = 3 * (masses + 1);
    for (i, v) in x.iter_mut().enumerate() {
        if i < np {
            if i % 3 == 1 {
                *v = r.gen_range(-0.4..0.4);
            } else {
                *v += r.gen_range(-0.1..0.1);
            }
        } else {
            *v = r.gen_range(-0.5..0.5);
        }
    }
    let spec = chain_problem(&params, x, 0.1, horizon);
    let u: Vec<f64> = (0..3 * horizon).map(|_| r.gen_range(-1.0..1.0)).collect();
    (spec, u)
}

pub struct BoxQuadratic {
    pub q: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Largest eigenvalue of `Q`.
    pub lipschitz: f64,
}

impl BoxQuadratic {
    pub fn problem(&self) -> impl Composite {
        quadratic(
            self.q.clone(),
            self.c.clone(),
            self.c.len(),
            ProxSpec::Box {
                lo: self.lo.clone(),
                hi: self.hi.clone(),
            },
        )
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }
}

/// `Q = AᵀA + εI` on a box around the origin.
pub fn random_box_quadratic(r: &mut ChaCha8Rng, n: usize) -> BoxQuadratic {
    let a = DMatrix::<f64>::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
    let q = a.transpose() * &a + DMatrix::<f64>::identity(n, n) * 0.1;
    let lipschitz = SymmetricEigen::new(q.clone()).eigenvalues.max();
    let lo: Vec<f64> = (0..n).map(|_| r.gen_range(-1.5..-0.2)).collect();
    let hi: Vec<f64> = (0..n).map(|_| r.gen_range(0.2..1.5)).collect();
    BoxQuadratic {
        q: (0..n)
            .map(|i| (0..n).map(|j| q[(i, j)]).collect())
            .collect(),
        c: (0..n).map(|_| r.gen_range(-3.0..3.0)).collect(),
        lo,
        hi,
        lipschitz,
    }
}

/// A box quadratic with a known stationary point: the linear term is chosen
/// so that `∇ℓ(u*)` satisfies the box optimality conditions at a `u*` with
/// some coordinates on the bounds.
pub fn box_quadratic_with_solution(r: &mut ChaCha8Rng, n: usize) -> (BoxQuadratic, Vec<f64>) {
    let mut bq = random_box_quadratic(r, n);
    let mut u_star = vec![0.0; n];
    let mut nu = vec![0.0; n];
    for i in 0..n {
        match r.gen_range(0..3) {
            0 => {
                u_star[i] = bq.lo[i];
                nu[i] = -r.gen_range(0.1..1.0);
            }
            1 => {
                u_star[i] = bq.hi[i];
                nu[i] = r.gen_range(0.1..1.0);
            }
            _ => u_star[i] = r.gen_range(bq.lo[i]..bq.hi[i]),
        }
    }
    // ∇ℓ(u*) = Qu* + c = −ν
    for i in 0..n {
        let qu: f64 = bq.q[i].iter().zip(&u_star).map(|(a, b)| a * b).sum();
        bq.c[i] = -nu[i] - qu;
    }
    (bq, u_star)
}
