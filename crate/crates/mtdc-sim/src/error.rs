//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Bad input data: dimension mismatch, nonpositive parameter, non-finite
    /// value, inverted bound, and similar.
    #[error("validation error: {0}")]
    Validation(String),

    /// The line graph does not form a usable grid (disconnected, self-loop,
    /// duplicate line, index out of range).
    #[error("topology error: {0}")]
    Topology(String),

    /// A scenario file could not be parsed or did not validate.
    #[error("scenario error (line {line}): {message}")]
    Scenario { line: usize, message: String },

    /// The integrator produced a non-finite value.
    #[error("numerical blowup at t = {t} s in {stage}")]
    NumericalBlowup { t: f64, stage: &'static str },

    /// An operation that requires a steady-state trajectory was given one
    /// that stopped at its horizon without settling.
    #[error("trajectory not at steady state (ended at t = {t} s)")]
    NotAtSteadyState { t: f64 },

    /// A linear system that the operation relies on is singular.
    #[error("rank error: {0}")]
    Singular(String),

    /// The voltage left the deadband during a run that assumed it would not;
    /// the small-disturbance precondition was violated, not the property.
    #[error("voltage left the deadband at t = {t} s; disturbance too large for the equivalence precondition")]
    BandExit { t: f64 },

    /// A CLI subcommand was invoked with a controller kind it does not support.
    #[error("unsupported controller kind: {0}")]
    UnsupportedKind(String),
}

impl Error {
    pub fn validation(message: impl Into<String>) -> Self {
        Error::Validation(message.into())
    }

    pub fn topology(message: impl Into<String>) -> Self {
        Error::Topology(message.into())
    }

    pub fn scenario(line: usize, message: impl Into<String>) -> Self {
        Error::Scenario {
            line,
            message: message.into(),
        }
    }

    /// Process exit code used by the CLI: 2 for validation problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::Topology(_)
            | Error::Scenario { .. }
            | Error::Singular(_)
            | Error::UnsupportedKind(_) => 2,
            Error::NumericalBlowup { .. } | Error::NotAtSteadyState { .. } | Error::BandExit { .. } => 3,
        }
    }
}
