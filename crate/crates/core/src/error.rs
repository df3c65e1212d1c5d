use alloc::string::String;

/// Errors raised by the solvers, model fitting and evaluation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{op}: normal matrix is singular at dimension {dim}")]
    Singular { op: &'static str, dim: usize },
    #[error("{op}: dual optimizer did not converge in {iters} iterations (duality gap {gap:e})")]
    NotConverged {
        op: &'static str,
        iters: usize,
        gap: f64,
    },
    #[error("{stage}: non-finite value at iteration {iteration}")]
    NonFinite { stage: &'static str, iteration: usize },
    #[error("trade-off {0} outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("no sample accepted: selective risk undefined at zero coverage")]
    EmptyCoverage,
}

pub type Result<T> = core::result::Result<T, Error>;
