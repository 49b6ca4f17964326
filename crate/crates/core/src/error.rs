use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no data")]
    NoData,
    #[error("degenerate dimension {0}: low and high percentiles coincide")]
    DegenerateDimension(usize),
    #[error(
        "embodiment `{embodiment}` has {steps} action steps, at least {required} are required"
    )]
    InsufficientData {
        embodiment: String,
        steps: usize,
        required: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unregistered embodiment index {0}")]
    UnregisteredEmbodiment(usize),
    #[error("unknown embodiment `{0}`")]
    UnknownEmbodiment(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("fourier embedding dimension must be even, got {0}")]
    OddDimension(usize),
    #[error("cardinality {0} outside [2, 16]")]
    CardinalityOutOfRange(usize),
    #[error("probability table is not normalized (sum = {0})")]
    Unnormalized(f64),
    #[error("model assigns zero probability to an outcome with data support")]
    SupportViolation,
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("batch without adjacency links")]
    MissingAdjacency,
    #[error("missing language embedding row {0}")]
    MissingLanguage(usize),
    #[error("batch size {0} is below the minimum of 2")]
    BatchTooSmall(usize),
    #[error("empty pair set")]
    EmptyPairs,
    #[error("invalid action string: {0}")]
    InvalidActionString(String),
    #[error("token {token} outside vocabulary of size {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
    #[error("post-training needs a residual depth of at least 2, got {0}")]
    PostTrainDepth(usize),
    #[error("position {position} out of range for {len} tokens")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("training diverged at step {step}: {term} = {value}")]
    Divergence {
        step: usize,
        term: String,
        value: f64,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Candle(#[from] candle_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
