use thiserror::Error;

/// Error type shared by all solver, simulator and I/O entry points.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An enumeration would exceed its configured size cap.
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    /// An iterative method hit its iteration cap before reaching tolerance.
    /// `residual` is the best residual seen when the cap was hit.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    /// A policy or solution file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
