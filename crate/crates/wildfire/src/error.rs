use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("observation index {index} out of range for state of length {len}")]
    ObservationIndex { index: usize, len: usize },

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("config validation error: field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },

    #[error("snapshot file corrupt: {0}")]
    SnapshotCorrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numerics, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigParse(_)
            | Error::ConfigInvalid { .. }
            | Error::ShapeMismatch(_)
            | Error::InvalidArgument(_) => 2,
            Error::Divergence(_) | Error::ObservationIndex { .. } | Error::SolveFailure(_) => 3,
            Error::SnapshotCorrupt(_) | Error::Io(_) => 4,
        }
    }

    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Error {
        Error::ConfigInvalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
