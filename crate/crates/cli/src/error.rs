use thiserror::Error;

/// Failures that end a command. Child-process failures are not errors; they
/// are recorded per repeat and surface as exit code 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("{0}")]
    Fatal(String),

    #[error(transparent)]
    Core(#[from] stabx_core::Error),

    #[error(transparent)]
    Schema(#[from] crate::artifacts::SchemaError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(vec![msg.into()])
    }

    pub fn fatal(msg: impl Into<String>) -> Self {
        CliError::Fatal(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
