use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest has {manifest} records but vector file has {vectors} rows")]
    CountMismatch { manifest: usize, vectors: usize },

    #[error("bad vector file header: {0}")]
    BadHeader(String),

    #[error("non-finite value in vector row {row}")]
    NonFiniteVector { row: usize },

    #[error("malformed manifest record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("dim mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("cannot build an index over an empty view")]
    EmptyView,

    #[error("zero-norm vector has no direction")]
    ZeroVector,

    #[error("asked for {k} selections from {available} candidates")]
    KTooLarge { k: usize, available: usize },

    #[error("retrieval shortfall: found {achieved} unique instances, needed {requested}")]
    Shortfall { achieved: usize, requested: usize },

    #[error("empty data")]
    EmptyData,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("insufficient data: need {needed}, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("stale index: {0}")]
    StaleIndex(String),

    #[error("invalid index file: {0}")]
    BadIndex(String),

    #[error("invalid model file: {0}")]
    BadModel(String),

    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
