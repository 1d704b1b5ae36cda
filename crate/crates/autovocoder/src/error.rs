use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("window/hop pair violates the constant-overlap-add condition: {0}")]
    ColaViolation(String),

    #[error("state error: {0}")]
    State(String),

    #[error("non-finite loss at step {step}, batch index {batch_index}: {detail}")]
    NanLoss {
        step: u64,
        batch_index: usize,
        detail: String,
    },

    #[error("malformed WAV file: {0}")]
    MalformedWav(String),

    #[error("unsupported WAV codec: {0}")]
    UnsupportedWav(String),

    #[error("sample rate mismatch: file has {found} Hz, configured rate is {expected} Hz")]
    SampleRateMismatch { found: u32, expected: u32 },

    #[error("checkpoint version mismatch: {0}")]
    CheckpointVersion(String),

    #[error("corrupt checkpoint: {0}")]
    CheckpointCorrupt(String),

    #[error("unknown parameter name in checkpoint: {0}")]
    UnknownParameter(String),

    #[error("bad config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
