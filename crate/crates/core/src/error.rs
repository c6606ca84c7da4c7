use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration field failed validation.
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// Tensor or vector lengths did not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An operation was called in a state that does not allow it.
    #[error("invalid state: {0}")]
    State(String),

    /// A NaN or infinity escaped a numeric routine.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("spec file: {0}")]
    Spec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user-supplied configuration rather than
    /// failures while running.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Spec(_) | Error::Domain(_))
    }
}
