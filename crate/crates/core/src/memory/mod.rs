//! Short-term and long-term memory, and text embedding.

mod embed;
mod ltm;
mod stm;

pub use embed::{
    dot, l2_norm, unit_or_basis, Embedder, HashEmbedder, RemoteEmbedder, RemoteEmbedderConfig,
    DEFAULT_DIMENSION,
};
pub use ltm::{
    decode_vector, encode_vector, LtmEntry, LtmSnapshot, LtmStore, SearchHit, SnapshotEntry,
    UNIT_NORM_TOLERANCE,
};
pub use stm::{StmBuffer, StmEntry, DEFAULT_STM_CAPACITY};

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("short-term memory is full ({0} entries); compress before pushing")]
    StmFull(usize),
    #[error("timestamp {given} precedes last timestamp {last}")]
    OutOfOrder { last: u64, given: u64 },
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("vector has dimension {found}, store expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector norm {0} is not 1")]
    NotUnitNorm(f64),
    #[error("embedding failed: {0}")]
    Embedding(String),
    #[error("invalid snapshot: {0}")]
    Snapshot(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
