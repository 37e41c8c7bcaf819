use thiserror::Error;

/// Failures raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("insufficient geometry: {0}")]
    InsufficientGeometry(String),
    #[error("normal matrix is singular")]
    SingularNormalMatrix,
    #[error("subset excluding {0:?} is rank deficient")]
    SubsetRankDeficient(Vec<usize>),
    #[error("insufficient redundancy: {0}")]
    InsufficientRedundancy(String),
    #[error("convolution grid would exceed its configured limit: {0}")]
    GridOverflow(String),
    #[error("tail probability {0:e} is below the resolvable mass")]
    TailUnresolved(f64),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("empty sample")]
    EmptySample,
    #[error("sample cannot be overbounded: {0}")]
    NonOverboundable(String),
    #[error("EM did not converge after {0} iterations")]
    EmConvergenceFailure(usize),
    #[error("no valid core/tail partition: {0}")]
    NoValidPartition(String),
    #[error("Kepler equation did not converge")]
    KeplerNonConvergence,
    #[error("unknown satellite {0}")]
    UnknownSatellite(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            Error::Io(e.to_string())
        } else {
            Error::Parse(e.to_string())
        }
    }
}
