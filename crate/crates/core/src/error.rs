use std::path::PathBuf;

/// Errors raised by models, samplers, diagnostics and the experiment runner.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("chain diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("no samples left after burn-in (K = {steps}, burn-in fraction = {burn_in_fraction})")]
    EmptySamples { steps: usize, burn_in_fraction: f64 },

    #[error("unstable integrator: spectral radius of the one-step map is {spectral_radius}")]
    Unstable { spectral_radius: f64 },

    #[error("unusable data: {0}")]
    UnusableData(String),

    #[error("undefined diagnostic: {0}")]
    UndefinedDiagnostic(String),

    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    #[error("ensemble member {index} failed: {source}")]
    Member {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::invalid(format!(
            "{what} has length {got}, expected {want}"
        )));
    }
    Ok(())
}

pub(crate) fn check_finite(what: &str, xs: &[f64]) -> Result<()> {
    if let Some(j) = xs.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "{what} has a non-finite entry at index {j}"
        )));
    }
    Ok(())
}
