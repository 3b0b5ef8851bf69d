use thiserror::Error;

/// Errors raised by models, problem assembly and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {context} at stage {stage}")]
    NonFinite { context: &'static str, stage: usize },

    #[error("singular spring: consecutive positions {index} and {next} coincide")]
    Singular { index: usize, next: usize },

    #[error("invalid problem: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("Lipschitz estimation diverged after {0} halvings")]
    LipschitzDiverged(usize),

    #[error("equilibrium computation did not converge (residual {residual:e} after {iterations} iterations)")]
    EquilibriumNotConverged { residual: f64, iterations: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("closed-loop solve failed at step {step}: {status}")]
    ClosedLoop { step: usize, status: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
