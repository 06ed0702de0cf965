use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, unknown or out of range.
    #[error("invalid value for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error(
        "grid of {grid} points cannot represent truncation order {order} (need at least {need})"
    )]
    Aliasing {
        grid: usize,
        order: usize,
        need: usize,
    },

    #[error("mismatched truncation orders {left} and {right}")]
    OrderMismatch { left: usize, right: usize },

    /// Some coefficient exceeded the overflow guard during time stepping.
    #[error("blow-up at step {step} (t = {time}): |coefficient of mode {mode}| = {magnitude:e}")]
    BlowUp {
        step: usize,
        time: f64,
        mode: isize,
        magnitude: f64,
    },

    #[error("integrity violation: {0}")]
    Integrity(String),

    #[error("initial data has spatial mean {mean:e}; shift to zero mean first (Galilean shift)")]
    NonZeroMean { mean: f64 },

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("time step {requested:e} exceeds the stability bound {bound:e}")]
    UnstableStep { requested: f64, bound: f64 },

    #[error("trajectory covers t <= {available} but horizon {requested} was requested")]
    TrajectoryTooShort { available: f64, requested: f64 },

    /// R reached zero or changed sign, so the logarithmic coordinate is undefined.
    #[error("sign of R lost on path {path} at step {step} (R = {value:e})")]
    SignViolation {
        path: usize,
        step: usize,
        value: f64,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error in {source_name} line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }
}
