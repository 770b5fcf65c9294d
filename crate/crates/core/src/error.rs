use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("column {column} has zero norm")]
    ZeroColumn { column: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coefficient {index} of {block} is nonzero outside the preliminary support")]
    OutsideSupport { block: &'static str, index: usize },

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("csv parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("response column `{requested}` not found; available columns: {available}")]
    MissingResponse { requested: String, available: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("problem too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("no grid point converged ({points} points tried); last error: {detail}")]
    NoConvergence { points: usize, detail: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
