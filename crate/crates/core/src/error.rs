use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing configuration key `{0}`")]
    MissingKey(String),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite input in {0}")]
    NonFiniteInput(&'static str),

    #[error("{what} is not positive semidefinite (min eigenvalue {min_eig:e}, norm {norm:e})")]
    NonPsd {
        what: &'static str,
        min_eig: f64,
        norm: f64,
    },

    #[error("matrix in {0} is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("degenerate anchor for user {user}: linear part {value:e} at the expansion point")]
    DegenerateAnchor { user: usize, value: f64 },

    #[error("no feasible initial point after {iterations} iterations (best QoS ratio {best_ratio:.6})")]
    InitFailed { best_ratio: f64, iterations: usize },

    #[error("zero-forcing design infeasible: {0}")]
    ZfInfeasible(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
