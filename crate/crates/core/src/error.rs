use std::path::PathBuf;

/// Errors raised across the forecasting pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("ingest error: {0}")]
    Ingest(String),
    #[error("windowing error: {0}")]
    Window(String),
    #[error("denormalization error: {0}")]
    Denormalize(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("interpolation error: {0}")]
    Interpolation(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("prediction error: {0}")]
    Prediction(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {lr:e})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("config error: {0}")]
    Config(String),
}

/// Coarse classification used by the command line to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Io { .. }
            | Error::Schema(_)
            | Error::Ingest(_)
            | Error::Window(_)
            | Error::Split(_)
            | Error::Index(_)
            | Error::Domain(_)
            | Error::Interpolation(_) => ErrorKind::Data,
            Error::Denormalize(_)
            | Error::Shape(_)
            | Error::Prediction(_)
            | Error::NonFiniteLoss { .. }
            | Error::Checkpoint(_) => ErrorKind::Runtime,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
