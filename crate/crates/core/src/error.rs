use thiserror::Error;

/// Errors raised by the kernel Galerkin machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("kernel family {0} has no derivative operations (not C2)")]
    UnsupportedDerivative(&'static str),

    #[error("Gram matrix is singular even with jitter {max_jitter:e} (duplicate or near-duplicate centers?)")]
    SingularGram { max_jitter: f64 },

    #[error("persistence-of-excitation margin {margin:e} is below threshold {threshold:e}")]
    PeViolation { margin: f64, threshold: f64 },

    #[error("policy iteration step {iteration}: {source}")]
    IterationFailed {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("grid of {grid_per_dim} points per axis: {source}")]
    LadderPoint {
        grid_per_dim: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value encountered during {0}")]
    NonFinite(&'static str),

    #[error("initial policy is not stabilizing: {0}")]
    NotStabilizing(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularGram { .. }
            | Error::PeViolation { .. }
            | Error::NonFinite(_)
            | Error::NotStabilizing(_) => true,
            Error::IterationFailed { source, .. } | Error::LadderPoint { source, .. } => {
                source.is_numerical()
            }
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
