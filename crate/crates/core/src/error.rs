use thiserror::Error;

#[derive(Debug, Error)]
pub enum CueError {
    #[error("degenerate interferer: zero power")]
    DegenerateInterferer,
    #[error("degenerate reference: zero power")]
    DegenerateReference,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mask overflow: {requested} frames requested from {available}")]
    MaskOverflow { requested: usize, available: usize },
    #[error("wrong degradation stage: {0}")]
    WrongDegradationStage(String),
    #[error("clip too short: {len} samples, need at least {min}")]
    ClipTooShort { len: usize, min: usize },
    #[error("unpadded feature: {frames} columns do not chunk into width {chunk} / hop {hop}")]
    UnpaddedFeature { frames: usize, chunk: usize, hop: usize },
    #[error("too few points for k-means: {points} < {clusters}")]
    TooFewPoints { points: usize, clusters: usize },
    #[error("dimension mismatch: features have {features}, codebook has {codebook}")]
    DimensionMismatch { features: usize, codebook: usize },
    #[error("token {token} out of range for {classes} classes")]
    TokenOutOfRange { token: usize, classes: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
}

pub type Result<T, E = CueError> = std::result::Result<T, E>;
