use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dense operator too large: {points} points exceeds the limit of {limit}")]
    TooLarge { points: usize, limit: usize },
    #[error("operator is not Hermitian (relative defect {0:e})")]
    NotHermitian(f64),
    #[error("exponent condition violated: {0}")]
    Exponents(String),
    #[error("no contraction at this resolution: {0}")]
    NoContraction(String),
    #[error("numerical divergence: {0}")]
    Divergence(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
    #[error("i/o: {0}")]
    Io(String),
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

impl Error {
    /// Numeric failures (as opposed to bad input) are reported with a distinct exit status by the CLI.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NoContraction(_) | Error::Divergence(_) | Error::Calibration(_) | Error::LinearAlgebra(_)
        )
    }
}
