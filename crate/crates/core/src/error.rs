use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not positive definite: pivot {pivot} has value {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error(
        "constant correlation {rho} is not positive semidefinite in dimension {dim} \
         (smallest eigenvalue {eigenvalue})"
    )]
    NotPositiveSemidefinite { dim: usize, rho: f64, eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("grid of {len} points exceeds the limit of {limit}")]
    CostGuard { len: usize, limit: usize },

    #[error("grid is not strictly increasing and positive at index {index}")]
    NonIncreasingGrid { index: usize },

    #[error("t = {t} lies outside the noise domain [0, {end}]")]
    OutsideDomain { t: f64, end: f64 },

    #[error("no observations before the horizon")]
    NoObservations,

    #[error("time sequence ends at {last}, which does not exceed the horizon {horizon}")]
    SequenceTooShort { last: f64, horizon: f64 },

    #[error("replication {index} failed: {source}")]
    Replication {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown test `{0}`")]
    UnknownTest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
