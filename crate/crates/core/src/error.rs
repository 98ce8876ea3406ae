use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (e.g. `t <= 0`).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid model parameters (alpha, delta, lambda, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A precondition of the operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The requested grid cannot resolve the kernel to the requested tolerance.
    #[error("insufficient resolution: achieved mass {achieved_mass:.3e} (tolerance {mass_tol:.1e}); {detail}")]
    Resolution {
        achieved_mass: f64,
        mass_tol: f64,
        detail: String,
    },

    /// A series or iteration did not reach the requested accuracy.
    #[error("accuracy not reached: {detail} (achieved bound {achieved:.3e})")]
    Accuracy { detail: String, achieved: f64 },

    /// Evaluation would overflow 64-bit floating point.
    #[error("overflow: {0}")]
    Overflow(String),

    /// The time stepper produced a non-finite value.
    #[error("divergence at time index {time_index}, space index {space_index}: value {value}")]
    Divergence {
        time_index: usize,
        space_index: usize,
        value: f64,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
