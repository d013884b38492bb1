use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("range error: {0}")]
    Range(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("aliasing: grid of {grid} points cannot resolve {needed} modes")]
    Aliasing { grid: usize, needed: usize },
    #[error("ill-posed horizon: gram condition {cond:.3e} exceeds {threshold:.1e}; use a longer T or fewer modes")]
    IllPosedHorizon { cond: f64, threshold: f64 },
    #[error("degenerate profile: beta_{k} = {value:.3e}")]
    DegenerateProfile { k: i64, value: f64 },
    #[error("accuracy: {0}")]
    Accuracy(String),
    #[error("blow-up at t = {time}: non-finite coefficients")]
    BlowUp { time: f64 },
    #[error("unreachable modes {0:?}")]
    Unreachable(Vec<i64>),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("phase '{phase}' failed: {source}")]
    Phase { phase: String, source: Box<Error> },
    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
