use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, grids or axes that do not fit together.
    #[error("structural error: {0}")]
    Structural(String),

    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Iterative solver failed to reach the requested residual.
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// A numerical routine produced an unusable result.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An operator violated the contract it was declared to satisfy.
    #[error("contract error: {0}")]
    Contract(String),

    /// Configuration did not validate; every problem found is listed.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn structural(msg: impl Into<String>) -> Error {
    Error::Structural(msg.into())
}
