use thiserror::Error;

/// Errors produced by the GDP library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("zero variance in column `{column}`")]
    ZeroVariance { column: String },

    #[error("incompatible loss: {0}")]
    IncompatibleLoss(String),

    #[error("transfer incompatibility: {0}")]
    TransferIncompatible(String),

    #[error("unsupported checkpoint format version {0}")]
    UnsupportedFormat(u32),

    #[error("malformed csv: {0}")]
    MalformedCsv(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn mismatch(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}
