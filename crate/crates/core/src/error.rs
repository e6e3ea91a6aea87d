use crate::engine::CausalityError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Causality(#[from] CausalityError),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("progress watchdog: {0}")]
    Watchdog(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl SimError {
    pub fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }

    /// Short code written into the `error` column of sweep output.
    pub fn code(&self) -> &'static str {
        match self {
            SimError::Config(_) => "config",
            SimError::Causality(_) => "causality",
            SimError::Protocol(_) => "protocol",
            SimError::Watchdog(_) => "watchdog",
            SimError::Invariant(_) => "invariant",
            SimError::Io(_) => "io",
            SimError::Json(_) => "json",
            SimError::Csv(_) => "csv",
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
