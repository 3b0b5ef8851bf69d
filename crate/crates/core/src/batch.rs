//! Independent solves and evaluations run side by side. With the `parallel`
//! feature these go through rayon; without it they run in order. Results are
//! identical either way since each item is computed by the same sequential
//! code.

use crate::adjoint::cost_and_gradient;
use crate::error::Result;
use crate::problem::{Composite, ProblemSpec};
use crate::solver::{fbs_solve, panoc_solve, Solution, SolverOptions};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Panoc,
    Fbs,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Panoc => "panoc",
            Algorithm::Fbs => "fbs",
        }
    }

    pub fn solve<P: Composite + ?Sized>(
        self,
        problem: &P,
        u0: &[f64],
        opts: &SolverOptions,
    ) -> Result<Solution> {
        match self {
            Algorithm::Panoc => panoc_solve(problem, u0, opts),
            Algorithm::Fbs => fbs_solve(problem, u0, opts),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Order-preserving map over `items`.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Runs `a` and `b`, possibly concurrently.
#[cfg(feature = "parallel")]
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    rayon::join(a, b)
}

#[cfg(not(feature = "parallel"))]
pub fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    (a(), b())
}

/// Runs `f` on a pool of `threads` workers, or on the global pool when
/// `threads` is `None`. Without the `parallel` feature this just calls `f`.
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) if n >= 1 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    f()
}

/// Solves `problem` from each starting point.
pub fn solve_many<P: Composite + ?Sized>(
    problem: &P,
    starts: &[Vec<f64>],
    opts: &SolverOptions,
    algorithm: Algorithm,
) -> Vec<Result<Solution>> {
    map(starts, |u0| algorithm.solve(problem, u0, opts))
}

/// Cost and gradient at each input sequence.
pub fn evaluate_many(spec: &ProblemSpec, points: &[Vec<f64>]) -> Vec<Result<(f64, Vec<f64>)>> {
    map(points, |u| cost_and_gradient(spec, u))
}
