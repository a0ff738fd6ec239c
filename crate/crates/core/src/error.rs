use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("masking violation: {0}")]
    MaskingViolation(String),
    #[error("episode transitions are not contiguous at index {0}")]
    NonContiguousEpisode(usize),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("forward cache was already consumed by a backward pass")]
    CacheReused,
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("relative advantage undefined: reference value at index {0} is zero")]
    ZeroReference(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
