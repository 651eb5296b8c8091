use thiserror::Error;

/// Errors raised by the simulation library.
///
/// Blow-up is never an error: it is reported through `RunStatus`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("conjugate gradient did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("state diverged at step {step} (t = {time:.6e}): non-finite value in u")]
    StateDiverged { step: usize, time: f64 },

    #[error("no {{mu > {mu0}}} neighbourhood of at least 3x3 cells around ({x:.4}, {y:.4})")]
    NoPositivityNeighborhood { x: f64, y: f64, mu0: f64 },

    #[error("cutoff exponent mismatch: cutoff has eta = {found}, p = {p} requires eta = {expected}")]
    EtaMismatch { found: f64, expected: f64, p: f64 },

    #[error("exponent p = {0} lies outside [1, 2)")]
    ExponentOutOfRange(f64),

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
