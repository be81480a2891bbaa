use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("malformed manifest: {0}")]
    MalformedManifest(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("memory budget exceeded: ensemble needs {needed} bytes, budget is {budget} bytes")]
    BudgetExceeded { needed: u64, budget: u64 },

    #[error("batch of {batch} samples exceeds max_batch {max}")]
    BatchTooLarge { batch: usize, max: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("vote {value} at model {model}, sample {sample} is not binary")]
    NotBinary { model: usize, sample: usize, value: u8 },

    #[error("at_least policy needs 1 <= k <= {models}, got k = {k}")]
    BadK { k: usize, models: usize },

    #[error("policy unavailable: every model must have labels [\"absent\", \"present\"] to combine votes")]
    PolicyUnavailable,

    #[error("bad request: {0}")]
    BadRequest(String),

    #[error("bad policy: {0}")]
    BadPolicy(String),

    #[error("bad pgm image: {0}")]
    BadImage(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },

    #[error("http: {0}")]
    Http(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
