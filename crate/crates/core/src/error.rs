use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input signal")]
    EmptyInput,

    #[error("unsupported sample rate {0} Hz")]
    UnsupportedRate(u32),

    #[error("segment too short: {got} samples, need at least {need}")]
    SegmentTooShort { got: usize, need: usize },

    #[error("max_lag {max_lag} must be less than the frame length {len}")]
    LagTooLarge { max_lag: usize, len: usize },

    #[error("silent frame: zero-lag autocorrelation is not positive")]
    SilentFrame,

    #[error("Levinson-Durbin recursion unstable at order {order} (|k| = {magnitude})")]
    UnstableRecursion { order: usize, magnitude: f64 },

    #[error("pitch period {period} outside supported range [{min}, {max}]")]
    BadPeriod { period: usize, min: usize, max: usize },

    #[error("requested {n_out} DCT coefficients from a length-{len} input")]
    DctLength { n_out: usize, len: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty collection")]
    EmptyCollection,

    #[error("non-finite value in input")]
    NonFinite,

    #[error("target mask selects no formants")]
    EmptyMask,

    #[error("invalid vowel spec: {0}")]
    InvalidSpec(String),

    #[error("no valid vowel spec after {0} rejection attempts; domain ranges are inconsistent")]
    RejectionFailure(usize),

    #[error("polynomial root finding failed: {0}")]
    RootFinding(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    WavFormat { path: PathBuf, msg: String },

    #[error("{path}:{line}: {msg}")]
    Manifest {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    ModelFormat { path: PathBuf, msg: String },
}

impl Error {
    /// True for errors caused by numerical failure rather than bad data or I/O.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::SilentFrame
                | Error::UnstableRecursion { .. }
                | Error::NonFinite
                | Error::RejectionFailure(_)
                | Error::RootFinding(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
