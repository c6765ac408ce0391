use thiserror::Error;

/// Errors produced by the geoflock library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// The kernel does not make the lattice sum over the deck orbit finite.
    #[error("kernel is not summable on a rank-{rank} deck lattice: {reason}")]
    ConditionViolation { rank: usize, reason: String },

    #[error(
        "truncation radius {radius} needed for tolerance {eps:e} exceeds the enumeration budget"
    )]
    TruncationInfeasible { radius: f64, eps: f64 },

    /// Some coordinate overflowed, or a position left the range where the
    /// deck lattice can still be resolved.
    #[error("state became non-finite at t = {time}")]
    NonFinite { time: f64 },

    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn config_err(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}
