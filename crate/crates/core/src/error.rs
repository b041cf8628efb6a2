use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A mask row has no surviving support; the caller picks the fallback.
    #[error("attention mask row {row} has zero support")]
    DegenerateMask { row: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("finite differences disagree at input {input} coordinate {coord}; re-sample the point")]
    NonSmooth { input: usize, coord: usize },

    #[error("memory capacity exhausted ({capacity} buffers)")]
    Capacity { capacity: usize },

    #[error("invalid buffer state: {0}")]
    InvalidState(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
