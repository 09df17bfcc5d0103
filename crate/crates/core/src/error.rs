use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("config error at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("trace is missing mandatory column `{0}`")]
    MissingColumn(String),

    #[error("trace line {line}: {reason}")]
    TraceRow { line: usize, reason: String },

    #[error("session log line {line}: {reason}")]
    SessionLog { line: usize, reason: String },

    #[error("run identity mismatch: session log belongs to `{log}`, trace to `{trace}`")]
    RunMismatch { log: String, trace: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user-supplied configuration.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::ConfigParse(_))
    }
}
