use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    /// A checked property or acceptance tolerance did not hold.
    #[error("property failure: {0}")]
    Property(String),
    /// Too many replicates aborted.
    #[error("run failed: {0}")]
    Run(String),
    #[error(transparent)]
    Core(#[from] lepski_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// 2 for property failures, 3 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Property(_) | HarnessError::Core(lepski_core::Error::PropertyViolation { .. }) => 2,
            HarnessError::Config(_) | HarnessError::Core(lepski_core::Error::Parameter(_)) => 3,
            _ => 1,
        }
    }
}
