use thiserror::Error;

/// Everything that can go wrong while evaluating fields, integrating, or
/// assembling cocycles and orbits.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("orbit left the working box at t = {time}")]
    Escape { time: f64, last_state: Vec<f64> },

    #[error("step budget of {max_steps} exhausted at t = {time}")]
    Budget { max_steps: usize, time: f64 },

    #[error("singularity encountered: |X| = {speed:e} below threshold {threshold:e}")]
    Singularity { speed: f64, threshold: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no section crossing in the search window ({0})")]
    NoCrossing(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("orbit closing failed: {0}")]
    ClosingFailure(String),

    #[error("fit failure: {0}")]
    FitFailure(String),

    #[error("pipeline failure: {0}")]
    Pipeline(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Pipeline,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Io(_) => ErrorKind::Config,
            Error::ClosingFailure(_) | Error::FitFailure(_) | Error::Pipeline(_) => {
                ErrorKind::Pipeline
            }
            _ => ErrorKind::Numerical,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
