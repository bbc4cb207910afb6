use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("{path}: unsupported encoding ({detail}); expected 16-bit integer PCM")]
    UnsupportedEncoding { path: PathBuf, detail: String },
    #[error("{path}: expected mono audio, found {channels} channels")]
    WrongChannelCount { path: PathBuf, channels: u16 },
    #[error("{path}: expected 16000 Hz audio, found {rate} Hz")]
    WrongSampleRate { path: PathBuf, rate: u32 },
    #[error("{path}: malformed WAV data: {detail}")]
    MalformedWav { path: PathBuf, detail: String },
    #[error("sample {index} = {value} lies outside [-1, 1)")]
    SampleOutOfRange { index: usize, value: f64 },
    #[error("waveform has {len} samples, shorter than one {window}-sample window")]
    WaveformTooShort { len: usize, window: usize },
    #[error("spectrogram has {bins} bins, expected {expected}")]
    BinCountMismatch { bins: usize, expected: usize },
    #[error("spectrogram values must be finite and nonnegative (frame {frame}, bin {bin})")]
    InvalidMagnitude { frame: usize, bin: usize },
    #[error("malformed spectrogram grid: {0}")]
    MalformedGrid(String),

    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("compute graph is not acyclic: node {node} reads node {input}")]
    GraphCycle { node: usize, input: usize },
    #[error("loss node must be a scalar, found shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient for parameter {0}; step rejected")]
    NonFiniteGradient(String),
    #[error("non-finite loss at step {step}; step rejected")]
    NonFiniteLoss { step: u64 },
    #[error("non-finite function value during finite differencing at coordinate {0}")]
    NonFiniteEvaluation(usize),
    #[error("non-finite recurrent state at sample {0}")]
    NonFiniteState(usize),
    #[error("duplicate parameter name {0}")]
    DuplicateParameter(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("expected {expected} frames, found {found}")]
    FrameCountMismatch { expected: usize, found: usize },
    #[error("cannot trim {trim} frames from each edge of a {frames}-frame spectrogram")]
    TooFewFramesToTrim { frames: usize, trim: usize },
    #[error("no corpus item has at least {0} frames")]
    NoEligibleUtterance(usize),
    #[error("waveform of {samples} samples is not aligned with {frames} spectrogram frames")]
    Misaligned { frames: usize, samples: usize },

    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint is truncated")]
    TruncatedCheckpoint,
    #[error("checkpoint does not match the configured model: parameter {name}: {detail}")]
    CheckpointShapeMismatch { name: String, detail: String },
    #[error("checkpoint holds a {found} model, expected {expected}")]
    CheckpointKind { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
