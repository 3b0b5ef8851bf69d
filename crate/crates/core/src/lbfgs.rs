//! Limited-memory BFGS model of the inverse Jacobian of the fixed-point
//! residual, built from pairs `s = u⁺ − u`, `y = r⁺ − r`.

use std::collections::VecDeque;

use crate::error::{check_dim, Result};
use crate::linalg::{axpy, dot, norm};

/// Pairs with `⟨s, y⟩ ≤ CURVATURE_EPS · ‖s‖‖y‖` are skipped.
pub const CURVATURE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsBuffer {
    memory: usize,
    dim: usize,
    /// Oldest first.
    pairs: VecDeque<Pair>,
    alpha: Vec<f64>,
}

impl LbfgsBuffer {
    pub fn new(dim: usize, memory: usize) -> Self {
        assert!(memory >= 1, "L-BFGS memory must be at least 1");
        LbfgsBuffer {
            memory,
            dim,
            pairs: VecDeque::with_capacity(memory),
            alpha: vec![0.0; memory],
        }
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Stores `(s, y)` if it satisfies the curvature condition, evicting the
    /// oldest pair when full. Returns whether the pair was stored.
    pub fn push(&mut self, s: &[f64], y: &[f64]) -> Result<bool> {
        check_dim("lbfgs s", self.dim, s.len())?;
        check_dim("lbfgs y", self.dim, y.len())?;
        let sy = dot(s, y);
        if !(sy > CURVATURE_EPS * norm(s) * norm(y)) {
            return Ok(false);
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back(Pair {
            s: s.to_vec(),
            y: y.to_vec(),
            rho: 1.0 / sy,
        });
        Ok(true)
    }

    /// `d = −H r` by the two-loop recursion with `H₀ = (⟨s,y⟩/⟨y,y⟩) I` from
    /// the newest pair. An empty buffer gives `−r`.
    pub fn direction(&mut self, r: &[f64]) -> Vec<f64> {
        debug_assert_eq!(r.len(), self.dim);
        let mut q = r.to_vec();
        let k = self.pairs.len();
        for (i, p) in self.pairs.iter().enumerate().rev() {
            let a = p.rho * dot(&p.s, &q);
            self.alpha[i] = a;
            axpy(-a, &p.y, &mut q);
        }
        if let Some(last) = self.pairs.back() {
            let h0 = 1.0 / (last.rho * dot(&last.y, &last.y));
            q.iter_mut().for_each(|v| *v *= h0);
        }
        for (i, p) in self.pairs.iter().enumerate().take(k) {
            let b = p.rho * dot(&p.y, &q);
            axpy(self.alpha[i] - b, &p.s, &mut q);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }

    pub fn reset(&mut self) {
        self.pairs.clear();
    }
}
