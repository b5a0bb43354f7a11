use crate::formats::FormatError;

/// A failed command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad or missing configuration, including missing input artifacts.
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    /// The run finished but violated a configured acceptance threshold.
    #[error("{0}")]
    Threshold(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Threshold(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Runtime(_) => "runtime",
            CliError::Config(_) => "config",
            CliError::Threshold(_) => "threshold",
        }
    }

    /// One-line JSON description for log scrapers.
    pub fn machine_line(&self, stage: &str) -> String {
        serde_json::json!({
            "error": {
                "kind": self.kind(),
                "stage": stage,
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}

impl From<eeprec_core::Error> for CliError {
    fn from(e: eeprec_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Runtime(e.to_string())
    }
}
