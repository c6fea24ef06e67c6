use std::path::PathBuf;

use crate::autodiff::Op;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown parameter path `{0}`")]
    UnknownParam(String),

    #[error("{path}:{line}: {msg}")]
    Obj { path: String, line: usize, msg: String },

    #[error("image: {0}")]
    Image(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("BVH needs at least one primitive")]
    EmptyBvh,

    #[error("NaN produced in forward pass at tape node {node} ({op})")]
    NanInForward { node: usize, op: Op },

    #[error("NaN gradient for parameter `{0}`")]
    NanGradient(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
