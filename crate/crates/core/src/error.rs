use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid spectrum: eps_c ({eps_c}) must exceed eps0 ({eps0})")]
    InvalidSpectrum { eps0: f64, eps_c: f64 },

    #[error("invalid mode index {k}: bath has {n_modes} modes (1-based)")]
    InvalidMode { k: usize, n_modes: usize },

    #[error("invalid mode pair ({j}, {k})")]
    InvalidPair { j: usize, k: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("dephasing coupling needs at least two bath modes, got {0}")]
    DephasingTooFewModes(usize),

    #[error("excitation {0} is not supported for this system model")]
    UnsupportedExcitation(String),

    #[error("operation requires a grid system model")]
    RequiresGrid,

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("all-zero amplitude vector")]
    ZeroAmplitudes,

    #[error("ratio undefined: |<a(0)>| = {0:e} is below the floor")]
    RatioUndefined(f64),

    #[error("propagation step failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("imaginary-time propagation did not converge after {iterations} iterations (last energy change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
