//! Error type shared by every stage of the pipeline.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("adiabatic elimination invalid: one-photon detuning is zero")]
    ZeroDetuning,

    #[error("integration failed at t = {time:e} s: step size underflow")]
    IntegrationFailure { time: f64 },

    #[error("generator has no unique steady state (kernel dimension > 1)")]
    NoUniqueSteadyState,

    #[error("signal drive amplitude {amplitude:e} is below the regularization threshold")]
    DegenerateDrive { amplitude: f64 },

    #[error("closed-form susceptibility is singular at these parameters")]
    SingularParameters,

    #[error("propagation failed at atom {atom}: {source}")]
    AtomFailure {
        atom: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("averaging window [{start:e}, {end:e}] s contains no samples")]
    EmptyWindow { start: f64, end: f64 },

    #[error("fit did not converge after {iterations} iterations")]
    FitNotConverged {
        iterations: usize,
        best: Box<crate::spectroscopy::SpectrumFit>,
    },

    #[error("fit input rejected: {0}")]
    FitInput(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config validation failed for `{key}`: {reason}")]
    ConfigValidation { key: String, reason: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors that originate in user configuration rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::ConfigParse { .. }
                | Error::ConfigValidation { .. }
                | Error::UnknownPreset(_)
                | Error::InvalidParameter { .. }
        )
    }
}
