//! Nonlinear MPC by forward-backward envelope line search with quasi-Newton
//! directions, plus the plain forward-backward baseline and a hanging-chain
//! benchmark.

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod batch;
pub mod chain;
pub mod error;
pub mod fbe;
pub mod integrator;
pub mod lbfgs;
pub mod linalg;
pub mod mpc;
pub mod problem;
pub mod prox;
pub mod solver;

pub use batch::Algorithm;
pub use error::{Error, Result};
pub use problem::{Composite, ProblemSpec};
pub use prox::ProxSpec;
pub use solver::{fbs_solve, panoc_solve, Solution, SolverOptions, Status};
