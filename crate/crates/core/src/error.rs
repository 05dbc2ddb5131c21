use thiserror::Error;

/// Errors raised by the solver and its diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("degenerate field: {0}")]
    DegenerateField(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("field support escapes the grid under rescaling by {factor}: {lost:.3e} of the mass lies beyond the sampled range")]
    GridEscape { factor: f64, lost: f64 },

    #[error("oracle grid too large: n = {0} exceeds the limit of {1} nodes per axis")]
    OracleTooLarge(usize, usize),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("mass mismatch: field carries {actual}, expected {expected}")]
    MassMismatch { expected: f64, actual: f64 },

    #[error("iterate reached the boundary of V(c): A = {a} >= rho0 = {rho0}")]
    BoundaryEvent { a: f64, rho0: f64 },

    #[error("all {0} starts failed to converge")]
    AllStartsFailed(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
