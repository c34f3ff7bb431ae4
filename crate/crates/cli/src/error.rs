use thiserror::Error;

/// Failure classes of the command line, one per exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Ingest(String),
    #[error("{0}")]
    Fit(String),
    #[error("{0}")]
    Decode(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Ingest(_) => 2,
            CliError::Fit(_) => 3,
            CliError::Decode(_) => 4,
        }
    }
}

pub fn ingest<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Ingest(e.to_string())
}

pub fn fit<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Fit(e.to_string())
}

pub fn decode<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Decode(e.to_string())
}
