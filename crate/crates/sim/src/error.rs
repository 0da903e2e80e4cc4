use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Core(#[from] pampc_core::Error),
    #[error(transparent)]
    Vision(#[from] pampc_vision::VisionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed log: {0}")]
    Log(String),
}

pub type Result<T> = std::result::Result<T, SimError>;
