use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("cannot normalize a field with mass {mass:e}")]
    Normalization { mass: f64 },

    #[error("time ordering violated: s = {s} must be strictly less than t = {t}")]
    TimeOrdering { s: f64, t: f64 },

    #[error("kernel positivity violated: value {value:e} at source node {source_node}, target node {target_node}")]
    PositivityViolation {
        source_node: usize,
        target_node: usize,
        value: f64,
    },

    #[error("proportional fitting did not converge after {iterations} iterations (last change {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("kernel and boundary data are incompatible: {0}")]
    Incompatible(String),

    #[error("propagated density has mass {mass} at t = {t}")]
    PropagationConsistency { t: f64, mass: f64 },

    #[error("boundary leak: {live} of {total} paths remain on the grid")]
    BoundaryLeak { live: usize, total: usize },

    #[error("invalid boundary data: {0}")]
    InvalidBoundary(String),

    #[error("division guard triggered: {0}")]
    DivisionGuard(String),

    #[error("{suite} checks failed: {checks}")]
    CheckFailed { suite: String, checks: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
