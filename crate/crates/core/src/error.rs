use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical error in state {state:?}: {message}")]
    Numerical {
        state: Option<usize>,
        message: String,
    },

    /// A hidden state received no posterior mass during an E-step.
    #[error("state {state} received zero total responsibility")]
    DegenerateState { state: usize },

    #[error("unsupported model schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(state: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Numerical {
            state,
            message: msg.into(),
        }
    }

    /// True for failures caused by the data or its schema rather than arithmetic.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::SchemaVersion { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
