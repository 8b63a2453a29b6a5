use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate quaternion")]
    DegenerateQuaternion,
    #[error("scene too small: {0}")]
    SceneTooSmall(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("index {index} out of range for {len} gaussians")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("grid geometry mismatch")]
    GeometryMismatch,
    #[error("covariance is not positive definite")]
    NonSpdCovariance,
    #[error("no valid camera placement: {0}")]
    NoValidPlacement(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("truncated {0}")]
    Truncated(&'static str),
    #[error("not a {0} file")]
    BadMagic(&'static str),
    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u32 },
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
    #[error("refiner failed: {0}")]
    Refiner(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
