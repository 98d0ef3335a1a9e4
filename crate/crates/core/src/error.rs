use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    #[error("no real {j}-phonon resonance: drive {omega_rabi} >= {j}·ω_a = {limit}")]
    NoRealResonance { j: u32, omega_rabi: f64, limit: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("step size underflow at t = {time:e} (h = {step:e})")]
    StepUnderflow { time: f64, step: f64 },

    #[error("trace drift {drift:e} at t = {time:e} exceeds tolerance")]
    TraceDrift { time: f64, drift: f64 },

    #[error("non-finite state at t = {time:e}")]
    NonFinite { time: f64 },

    #[error("step resolution too coarse: {steps} steps, need at least {required}")]
    InsufficientResolution { steps: usize, required: usize },

    #[error("requested output extent {extent} exceeds the Nyquist limit {limit}")]
    NyquistViolation { extent: f64, limit: f64 },

    #[error("grid is not uniform")]
    NonUniformGrid,

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("signal cannot be explained by any distribution (fitted weight {weight:e})")]
    InfeasibleFit { weight: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
