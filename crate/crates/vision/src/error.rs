use thiserror::Error;

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no valid depth within the window around pixel ({u:.1}, {v:.1})")]
    NoDepth { u: f64, v: f64 },
    #[error("malformed raster file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] pampc_core::Error),
}

pub type Result<T> = std::result::Result<T, VisionError>;
