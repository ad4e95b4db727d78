//! Harness error type and process exit-code mapping.

use faultline_core::Error as CoreError;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("pipeline validation failed:\n{0}")]
    Validation(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Exit code for the CLI. Integrity failures (a tampered or
    /// truncated event log) exit 2; every other failure exits 1.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Core(CoreError::Integrity { .. }) => 2,
            _ => 1,
        }
    }
}
