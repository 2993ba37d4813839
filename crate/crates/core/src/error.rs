use thiserror::Error;

/// Errors surfaced by parsing, solving, and fusion.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    #[error("malformed row at {path}:{line}: {message}")]
    Row {
        path: String,
        line: u64,
        message: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular geometry: {0}")]
    SingularGeometry(String),

    #[error("no convergence after {iterations} iterations (last step {last_step} m)")]
    NonConvergence { iterations: usize, last_step: f64 },

    #[error("no data: {0}")]
    NoData(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
