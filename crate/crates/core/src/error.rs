use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulation and estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("degenerate correlation: inputs carry no energy")]
    DegenerateCorrelation,

    #[error("degenerate segment: zero energy")]
    DegenerateSegment,

    #[error("degenerate spectrum: all bins are zero")]
    DegenerateSpectrum,

    #[error("shift exceeds model validity: {shift:.2} samples against a limit of {limit:.2}")]
    ShiftExceedsModel { shift: f64, limit: f64 },

    #[error("trajectory too short: need {needed} steps, have {got}")]
    TrajectoryTooShort { needed: usize, got: usize },

    #[error("coarse sync unavailable: {0}")]
    CoarseSyncUnavailable(String),

    #[error("SRO estimator not settled")]
    NotSettled,

    #[error("no consensus: best consensus set has {inliers} of {total} observations")]
    NoConsensus {
        inliers: usize,
        total: usize,
        best_effort: crate::sto::StoEstimate,
    },

    #[error("no active observations")]
    NoObservations,

    #[error("empty audio in {0}")]
    EmptyAudio(PathBuf),

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("sample rate mismatch: file has {file} Hz, expected {expected} Hz")]
    RateMismatch { file: u32, expected: u32 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
