use std::path::PathBuf;

use delayform_core::ctcr::CtcrError;
use delayform_core::formation::FormationError;
use delayform_core::quasipoly::QuasiError;
use delayform_core::simulator::SimError;
use delayform_core::spectral::SpectralError;
use delayform_core::topology::{SpectrumError, TopologyError};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unstable trajectory: state bound exceeded at t={time}")]
    Diverged { time: f64 },
}

impl Error {
    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse { .. } | Error::Input(_) => 1,
            Error::Numerical(_) => 2,
            Error::Diverged { .. } => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}

impl From<TopologyError> for Error {
    fn from(e: TopologyError) -> Self {
        Error::Input(e.to_string())
    }
}

impl From<SpectrumError> for Error {
    fn from(e: SpectrumError) -> Self {
        Error::Numerical(e.to_string())
    }
}

impl From<QuasiError> for Error {
    fn from(e: QuasiError) -> Self {
        match e {
            QuasiError::InvalidGains { .. } | QuasiError::InvalidDelays { .. } => Error::Input(e.to_string()),
            _ => Error::Numerical(e.to_string()),
        }
    }
}

impl From<CtcrError> for Error {
    fn from(e: CtcrError) -> Self {
        match e {
            CtcrError::BadWindow(_) | CtcrError::BadResolution | CtcrError::EmptyGrid | CtcrError::BadGrid => Error::Input(e.to_string()),
            _ => Error::Numerical(e.to_string()),
        }
    }
}

impl From<SpectralError> for Error {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::BadRegion => Error::Input(e.to_string()),
            _ => Error::Numerical(e.to_string()),
        }
    }
}

impl From<FormationError> for Error {
    fn from(e: FormationError) -> Self {
        match e {
            FormationError::Length { .. } => Error::Input(e.to_string()),
            _ => Error::Numerical(e.to_string()),
        }
    }
}

impl From<SimError> for Error {
    fn from(e: SimError) -> Self {
        match e {
            SimError::HistoryUnderrun(_) => Error::Numerical(e.to_string()),
            _ => Error::Input(e.to_string()),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
