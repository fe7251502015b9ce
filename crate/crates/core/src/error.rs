use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown BBOB function id {0} (expected 1..=24)")]
    UnknownFunction(u8),
    #[error("unsupported problem dimension {0} (expected one of 5, 10, 20, 50)")]
    UnsupportedDim(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("population of size {got} is too small for this operator (needs at least {needed})")]
    PopulationTooSmall { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid bound-control method index {0} (expected 0..=4)")]
    InvalidBoundMethod(usize),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unknown algorithm id {0} (expected 0, 1 or 2)")]
    UnknownAlgorithm(u8),
    #[error("configuration does not match the algorithm: {0}")]
    ConfigMismatch(String),
    #[error("action bin {bin} out of range for dimension {dim} with {limit} bins")]
    BinOutOfRange { dim: usize, bin: usize, limit: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("empty population")]
    EmptyPopulation,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("transition table row for state {state}, action {action} sums to {sum}, not 1")]
    NonStochastic { state: usize, action: usize, sum: f64 },
    #[error("backward pass called with a cache that does not match the parameters")]
    StaleCache,
    #[error("line {line}: {msg}")]
    Record { line: usize, msg: String },
    #[error("checksum mismatch: manifest says {expected}, file hashes to {actual}")]
    Checksum { expected: String, actual: String },
    #[error("format version mismatch: expected {expected}, found {found}")]
    Version { expected: String, found: String },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
