use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad field file: {0}")]
    Format(String),
    #[error("unresolved oscillation: {0}")]
    Resolution(String),
    #[error("point not interior: {0}")]
    NotInterior(String),
    #[error("singular system (0 is numerically a Dirichlet eigenvalue of the discrete operator): {0}")]
    Singular(String),
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("boundary basis mismatch: {0}")]
    BasisMismatch(String),
    #[error("division by zero: {0}")]
    ZeroValue(String),
}

pub type Result<T> = std::result::Result<T, Error>;
