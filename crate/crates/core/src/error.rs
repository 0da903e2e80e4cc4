use thiserror::Error;

/// Errors raised by the geometry, dynamics, obstacle and solver layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point behind camera (depth {depth:.3e} m)")]
    BehindCamera { depth: f64 },
    #[error("degenerate image line: endpoints coincide")]
    DegenerateLine,
    #[error("line not visible from camera")]
    NotVisible,
    #[error("degenerate direction: body and obstacle centers coincide")]
    DegenerateDirection,
    #[error("argument {0} outside the open interval (-1, 1)")]
    Domain(f64),
    #[error("problem construction failed: {0}")]
    Construction(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("non-finite {what}")))
    }
}
