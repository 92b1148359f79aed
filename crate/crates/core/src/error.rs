use thiserror::Error;

/// Errors raised anywhere in the decoding pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("context is empty")]
    EmptyContext,
    #[error("unknown token id {0}")]
    UnknownTokenId(u32),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero-norm vector in {0}")]
    ZeroNorm(&'static str),
    #[error("segment buffer is full (capacity {0})")]
    BufferFull(usize),
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid segment weights: alpha + beta + gamma = {0}")]
    InvalidWeights(f64),
    #[error("backend unreachable: {0}")]
    BackendUnreachable(String),
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error("context too long: {len} tokens exceeds limit {limit}")]
    ContextTooLong { len: usize, limit: usize },
    #[error("fewer points ({points}) than clusters ({clusters})")]
    FewerPointsThanK { points: usize, clusters: usize },
    #[error("no accepted segments")]
    NoAcceptedSegments,
    #[error("every document in the corpus is empty")]
    AllEmptyDocuments,
    #[error("unknown preset `{name}`; valid presets: {}", valid.join(", "))]
    UnknownPreset { name: String, valid: Vec<String> },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("inconsistent thresholds after clamping: low {low} >= high {high}")]
    InconsistentOutput { low: f64, high: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
