use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("empty batch: co-occurrence needs at least one feature column")]
    EmptyBatch,
    #[error("matrix is rank deficient (smallest eigenvalue {smallest:e})")]
    RankDeficient { smallest: f64 },
    #[error("invalid spectral plan: {0}")]
    Plan(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("malformed tensor file at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_)
            | Error::Config(_)
            | Error::Validation(_)
            | Error::Plan(_)
            | Error::EmptyBatch => 1,
            Error::Numeric(_)
            | Error::Domain(_)
            | Error::RankDeficient { .. }
            | Error::Invariant(_) => 2,
            Error::Parse { .. } | Error::Io(_) => 3,
        }
    }
}
