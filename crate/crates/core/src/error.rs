use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingest {
        row: usize,
        column: String,
        message: String,
    },

    #[error("dataset too small: n = {0}, at least 3 rows are required")]
    TooSmall(usize),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("zero total variance: R² undefined")]
    ZeroVariance,

    #[error("training failed: {0}")]
    Training(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate comparison: {0}")]
    DegenerateComparison(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end: 2 for bad input,
    /// 3 for numerical or degenerate failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Ingest { .. }
            | Error::TooSmall(_)
            | Error::Input(_)
            | Error::Config(_)
            | Error::Dimension(_)
            | Error::Io(_) => 2,
            Error::ZeroVariance
            | Error::Training(_)
            | Error::Numerical(_)
            | Error::DegenerateComparison(_) => 3,
        }
    }
}
