use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("dart (column {column}, level {level}) is outside a board of {columns} columns with max level {max_level}")]
    DartOutOfRange {
        column: usize,
        level: u32,
        columns: usize,
        max_level: u32,
    },

    #[error("hash value {0} is outside (0, 1]")]
    HashOutOfRange(f64),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("cannot merge sketches: {0}")]
    Mismatch(String),

    #[error("malformed sketch encoding: {0}")]
    Decode(String),

    #[error("quadrature did not converge: estimated error {achieved:e} exceeds tolerance {tolerance:e}")]
    Quadrature { achieved: f64, tolerance: f64 },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParams(msg.into())
}
