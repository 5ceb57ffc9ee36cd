use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model spec: {0}")]
    Spec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite activation in layer {layer}: {detail}")]
    Numeric { layer: usize, detail: String },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: row {row}: {msg}")]
    Ingest { path: PathBuf, row: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("round {round}, client {client}: {source}")]
    Round {
        round: usize,
        client: String,
        #[source]
        source: Box<Error>,
    },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("linear algebra: {0}")]
    Linalg(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the failure stems from the run's configuration rather than
    /// from the computation, looking through fold and round context.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Spec(_) => true,
            Error::Fold { source, .. } | Error::Round { source, .. } => source.is_config(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
