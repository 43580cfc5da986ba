use thiserror::Error;

#[derive(Error, Debug)]
pub enum QcrvError {
    #[error("unsupported dimension {0}: only n = 2 and n = 4 are implemented")]
    UnsupportedDimension(u32),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value in {context} at flat index {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("dense transform guard: N = {n_axis} exceeds the N <= 16 oracle limit")]
    DenseGuard { n_axis: u32 },

    #[error("integral overflow despite max-shift (shift {shift:.3e}, log-magnitude {log_magnitude:.3e})")]
    Overflow { shift: f64, log_magnitude: f64 },

    #[error(
        "scaling function has no sign change on (0, 1]: phi(1) = {phi_one:.6e} < 0; \
         the field must be concentrated further before projection"
    )]
    NoSignChange { phi_one: f64 },

    #[error("scaling function is nonnegative at t = 0 (integral of f = {phi_zero:.6e}); f is not admissible")]
    BadScalingBracket { phi_zero: f64 },

    #[error("bisection met width target but |phi(t)| = {phi:.3e} exceeds tolerance {tol:.3e}")]
    RootToleranceNotMet { phi: f64, tol: f64 },

    #[error("denominator vanished in {0}")]
    DegenerateDenominator(&'static str),

    #[error("iterate amplitude overflow: max n*u = {0:.3e} (field no longer representable)")]
    AmplitudeOverflow(f64),

    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("no concentration found: {0}")]
    NoConcentration(String),

    #[error("rescale window exceeds the flat chart: r*R = {0:.6e} > 1/4")]
    WindowExceedsChart(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("postcondition failed: {context} (deviation {deviation:.3e})")]
    Postcondition { context: &'static str, deviation: f64 },
}

pub type Result<T> = std::result::Result<T, QcrvError>;
