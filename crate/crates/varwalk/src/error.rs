//! Error type shared across the crate.

/// Errors produced by kernels, schedules, the ensemble harness, and the
/// diffusion solver.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The requested operation is not available for this configuration
    /// (e.g. analytic gradient of a custom objective without one).
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    /// The grid is too coarse to resolve the requested quantity.
    #[error("resolution error: {0}")]
    Resolution(String),
    /// A run aborted on a non-finite value or a violated stability bound.
    #[error("numerical abort: {0}")]
    Numerical(String),
    /// A fit had no usable data points.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    pub(crate) fn resolution(msg: impl Into<String>) -> Self {
        Error::Resolution(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn degenerate_fit(msg: impl Into<String>) -> Self {
        Error::DegenerateFit(msg.into())
    }
}
