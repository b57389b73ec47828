use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SdsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SdsError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    ManifestLine {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid record {id:?}: {msg}")]
    InvalidRecord { id: String, msg: String },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("invalid class table: {0}")]
    ClassTable(String),
    #[error("invalid image: {0}")]
    Image(String),
    #[error("image decode error at {path}: {source}")]
    ImageDecode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("invalid mask at {path}: {msg}")]
    Mask { path: PathBuf, msg: String },
    #[error("mask dimension mismatch: {0}x{1} vs {2}x{3}")]
    MaskDims(u32, u32, u32, u32),
    #[error("cannot grid {height}x{width} image into {n} patches")]
    Grid { height: u32, width: u32, n: usize },
    #[error("permutation scale {perm} does not match grid of {grid} patches")]
    ScaleMismatch { perm: usize, grid: usize },
    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("zero-norm embedding vector")]
    ZeroNorm,
    #[error("invalid embedding: {0}")]
    Embedding(String),
    #[error("embedding store has no key {0:?}")]
    MissingKey(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("json error at {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("stale artifact {path}: {msg}")]
    StaleArtifact { path: PathBuf, msg: String },
}

impl SdsError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SdsError::Io {
            path: path.into(),
            source,
        }
    }
}
