use thiserror::Error;

/// Errors raised by the solvers and their building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("nx too small: got {0}, need at least 8")]
    GridTooSmall(usize),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite coefficient at x = {x}, t = {t}")]
    NonFiniteCoefficient { x: f64, t: f64 },

    #[error("Lambda power must be -1, 0 or 1, got {0}")]
    InvalidLambdaPower(i32),

    #[error("tree too large: d = {d}, n_steps = {n_steps} exceeds the limit of {max} steps")]
    TreeTooLarge { d: usize, n_steps: usize, max: usize },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("level {level} out of range for a tree with {n_steps} steps")]
    LevelOutOfRange { level: usize, n_steps: usize },

    #[error("singular tridiagonal system (pivot {pivot:e} at row {row})")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("unknown coefficient family `{0}`")]
    UnknownFamily(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coefficient validation failed: {0}")]
    Validation(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("solution blew up at level {level}: norm {norm:e}")]
    BlowUp { level: usize, norm: f64 },

    #[error("incompatible time steps: {0}")]
    IncompatibleStep(String),

    #[error("initial point {0} lies outside the closed domain")]
    InitOutsideDomain(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
