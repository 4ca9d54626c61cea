use thiserror::Error;

/// Errors raised by the test machinery and its file front ends.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate window: s = {s} must be below t = {t}")]
    DegenerateWindow { s: f64, t: f64 },
    #[error("invalid window ({j}, {k}): need j < k < n = {n}")]
    InvalidWindow { j: usize, k: usize, n: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("exact enumeration refused: n = {n} exceeds the limit {limit}")]
    EnumerationTooLarge { n: usize, limit: usize },
    #[error("duplicate design point x = {0}")]
    DuplicateX(f64),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("need at least 2 observations, got {0}")]
    TooFewRows(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the data rather than by the caller's settings.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::DuplicateX(_)
                | Error::Parse { .. }
                | Error::TooFewRows(_)
                | Error::InvalidInput(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
