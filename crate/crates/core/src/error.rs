use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields are defined on different grids")]
    GridMismatch,

    #[error("{kind} exponent out of range: {detail}")]
    InvalidExponent { kind: &'static str, detail: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation is undefined for the zero field")]
    ZeroField,

    #[error("non-finite values: {0}")]
    NonFinite(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("refused: supercritical component {0}, the constrained infimum is -inf")]
    RefusedSupercritical(String),

    #[error("refused: mass {rho} violates the critical mass condition (margin {margin:e})")]
    RefusedAboveThreshold { rho: f64, margin: f64 },

    #[error("missing threshold mass for {0}")]
    MissingThreshold(String),

    #[error("profile does not decay at the box boundary ({ratio:e} > {tol:e})")]
    BoundaryDecay { ratio: f64, tol: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
