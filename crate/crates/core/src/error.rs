use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("failed to parse scenario file: {0}")]
    Parse(String),

    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("infeasible scenario: {0}")]
    Infeasible(String),

    #[error("conic backend failed with status {status}")]
    Backend { status: String },

    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("stream {stream} is not rank one (relative residual {ratio:.3e})")]
    RankRecovery { stream: usize, ratio: f64 },

    #[error("invalid decoding order: {0}")]
    InvalidPermutation(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }
}
