//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two objects do not live over the same discretization (weight, grid or
    /// frequency window).
    #[error("incompatible spaces: {0}")]
    IncompatibleSpace(String),

    /// The declared decay of a generator is too weak for the requested
    /// smoothness index; the frequency-window truncation would not converge.
    #[error("unsound truncation for '{label}': required {required}, got {actual}")]
    UnsoundTruncation {
        label: String,
        /// The inequality that must hold for the weighted tail to be summable.
        required: String,
        actual: String,
    },

    /// A tabulated generator was evaluated outside its tabulated range.
    #[error("tabulated generator '{label}' evaluated out of range at xi = {xi:?}")]
    TabulatedOutOfRange { label: String, xi: Vec<f64> },

    /// Malformed tabulated-generator file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// All generators have empty spectrum; no classification is possible.
    #[error("degenerate system: every fiber Gramian vanishes on the grid")]
    DegenerateSystem,

    /// An operation that requires a frame was given a system that is not one.
    #[error("not a frame: {0}")]
    NotAFrame(String),

    /// An operation that requires a Riesz family was given a system that is
    /// not one.
    #[error("not a Riesz family: {0}")]
    NotRiesz(String),

    /// A fiber field does not lie in the space it must belong to.
    #[error("fiber outside the space at t = {t:?}: relative residual {residual:.3e} exceeds {tol:.3e}")]
    DomainViolation { t: Vec<f64>, residual: f64, tol: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}
