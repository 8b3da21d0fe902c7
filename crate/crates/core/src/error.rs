use alloc::string::String;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
    #[error("waveform has {len} samples, shorter than one {window}-sample window")]
    TooShort { len: usize, window: usize },
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("batch norm running statistics are not initialized")]
    MissingStatistics,
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("class {0} has zero frames")]
    ZeroClassCount(usize),
    #[error("label {0} is not allowed here")]
    InvalidLabel(u8),
    #[error("segment [{onset}, {offset}] is malformed")]
    MalformedSegment { onset: f64, offset: f64 },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("no speech energy to reference the requested SNR")]
    NoSpeechEnergy,
    #[error("reference contains no speech")]
    EmptyReference,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = core::result::Result<T, Error>;
