use thiserror::Error;

/// Failures mapped onto the stable exit-code contract.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("missing artifact: {0}")]
    Missing(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Missing(_) => 4,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<infcast_core::Error> for CliError {
    fn from(e: infcast_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
