use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed input: wrong shapes, non-symmetric matrices, empty boxes.
    #[error("validation error: {0}")]
    Validation(String),

    /// Parameters that are individually valid but unusable together, such as
    /// a step-size schedule that runs out before the requested iterations.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// The requested operation needs something the inputs do not provide
    /// (Hessian-vector products, intrinsic volumes, a closed-form prox).
    #[error("capability error: {0}")]
    Capability(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("quadrature window too small: boundary density is {ratio:e} of the peak")]
    WindowTooSmall { ratio: f64 },

    #[error("chain aborted at iteration {iteration}: {reason}")]
    ChainAborted { iteration: usize, reason: String },
}

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
