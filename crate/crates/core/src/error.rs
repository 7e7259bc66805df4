use thiserror::Error;

/// Errors surfaced by the simulator core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("retraction produced a degenerate step: {0}")]
    DegenerateStep(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is numerically singular in {0}")]
    Singular(&'static str),

    #[error("line search failed to find a descent step")]
    LineSearchFailed,

    #[error("power bisection could not bracket the constraint")]
    BisectionBracket,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input for {0}")]
    Empty(&'static str),

    #[error("sweep aborted: {failed} of {total} trials failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("dump parse error: {0}")]
    DumpFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(op: &'static str, detail: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            op,
            detail: detail.into(),
        }
    }
}
