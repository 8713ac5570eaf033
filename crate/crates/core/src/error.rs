use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid probability data: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("channel too large: {size} outputs exceeds cap {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: {term} is not finite")]
    Diverged { epoch: usize, term: String },

    #[error("infeasible utility target {gamma} (best achievable {best})")]
    Infeasible { gamma: f64, best: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("network error fetching {url}: {message} (populate the cache directory manually to work offline)")]
    Network { url: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
