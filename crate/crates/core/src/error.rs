//! Error type shared by all processing stages.

use thiserror::Error;

/// Errors produced by trace validation, estimation, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("trace too short: {len} samples, need at least {min}")]
    TraceTooShort { len: usize, min: usize },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("max_lag {max_lag} out of range for trace of {len} samples")]
    MaxLagOutOfRange { max_lag: usize, len: usize },

    #[error("nfft {nfft} too small, need at least {min}")]
    NfftTooSmall { nfft: usize, min: usize },

    #[error("kurtosis undefined for zero-variance trace")]
    UndefinedKurtosis,

    #[error("invalid phase grid step: {0}")]
    InvalidGridStep(String),

    #[error("invalid wavelet length: {0}")]
    InvalidWaveletLength(String),

    #[error("wavelet estimation failed: {0}")]
    EstimationFailed(String),

    #[error("sampling rate mismatch: {a} Hz vs {b} Hz")]
    FsMismatch { a: f64, b: f64 },

    #[error("wavelet has no energy")]
    ZeroWavelet,

    #[error("segment too short: {len} points, need at least {min} for order {order}")]
    SegmentTooShort { len: usize, min: usize, order: usize },

    #[error("segment has zero energy")]
    ZeroEnergySegment,

    #[error("degenerate spectrum: no nonzero magnitude")]
    DegenerateSpectrum,

    #[error("spectral band too narrow: {width} bins, need at least 3")]
    BandTooNarrow { width: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("spike collision at sample {sample}")]
    SpikeCollision { sample: usize },

    #[error("spike time {time_s} s outside trace extent")]
    SpikeOutOfRange { time_s: f64 },

    #[error("invalid pulse spec: {0}")]
    InvalidPulseSpec(String),

    #[error("invalid scan: {0}")]
    InvalidScan(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
