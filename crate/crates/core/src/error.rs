use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("header mismatch in {path}: expected `{expected}`, found `{found}`")]
    HeaderMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path}: {rejected} of {total} rows rejected; the file probably does not match its channel schema")]
    TooManyMalformed {
        path: PathBuf,
        rejected: usize,
        total: usize,
    },

    /// Input data is unusable (empty streams, too few rows, schema mismatch).
    #[error("data error: {0}")]
    Data(String),

    /// A hyperparameter or argument is outside its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular normal system (pivot {pivot:e} at column {column}); increase alpha")]
    Singular { column: usize, pivot: f64 },

    #[error("SMO did not converge after {iterations} iterations (KKT violation {violation:e}, tolerance {tolerance:e})")]
    NotConverged {
        iterations: usize,
        violation: f64,
        tolerance: f64,
    },

    #[error("feature schema mismatch: model expects {expected} features, got {found}")]
    SchemaMismatch { expected: usize, found: usize },

    #[error("R-squared is undefined when the actual values are constant")]
    ConstantActual,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numeric routines rather than of the input data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Singular { .. } | Error::NotConverged { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
