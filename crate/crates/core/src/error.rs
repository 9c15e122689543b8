use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An input lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Parameters are individually valid but violate a joint constraint.
    #[error("constraint violated: {0}")]
    Constraint(String),
    /// A history integral diverges for the requested decay rate.
    #[error("divergent history integral: {0}")]
    Divergent(String),
    /// Fields or clouds defined on different grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    /// A step produced NaN or infinite values.
    #[error("non-finite values at t = {t}: {detail}")]
    NonFinite { t: f64, detail: String },
    /// Recorded samples are not on a uniform stride.
    #[error("stride mismatch: {0}")]
    StrideMismatch(String),
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = core::result::Result<T, Error>;
