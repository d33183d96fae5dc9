use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("schema violation in record {index}, field `{field}`: {message}")]
    SchemaViolation {
        index: usize,
        field: String,
        message: String,
    },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("degenerate box: {0}")]
    DegenerateBox(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("embedding has zero norm; cosine similarity is undefined")]
    ZeroNormEmbedding,
    #[error("class `{0}` has a zero sample count")]
    ZeroCount(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("insufficient class diversity: {0}")]
    InsufficientClassDiversity(String),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),
    #[error("stage ordering: {0}")]
    StageOrder(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("no temporal overlap between any tracklet and GPS track")]
    NoTemporalOverlap,
    #[error("length mismatch: {left} predictions vs {right} truths")]
    LengthMismatch { left: usize, right: usize },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("patch of {patch} px is larger than the {height}x{width} image")]
    PatchLargerThanImage {
        patch: usize,
        height: usize,
        width: usize,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },
    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
