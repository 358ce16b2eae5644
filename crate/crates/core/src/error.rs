use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not symmetric (max relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (pivot {pivot} failed)")]
    NotPositiveDefinite { pivot: usize },
    #[error("design matrix is rank deficient (numerical rank {rank} < {expected})")]
    RankDeficient { rank: usize, expected: usize },
    #[error("connectivity m = {m} exceeds n - 1 = {max}")]
    InvalidConnectivity { m: usize, max: usize },
    #[error("submatrix ending at row {index} is numerically singular (rcond {rcond:e})")]
    SingularSubmatrix { index: usize, rcond: f64 },
    #[error("innovation variance at row {index} is not positive ({value:e})")]
    NonPositiveInnovation { index: usize, value: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerical pipeline, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::RankDeficient { .. }
                | Error::SingularSubmatrix { .. }
                | Error::NonPositiveInnovation { .. }
                | Error::NotSymmetric(_)
        )
    }

    /// Short machine-readable tag used on the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidKernel(_) => "invalid_kernel",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotSymmetric(_) => "not_symmetric",
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::InvalidConnectivity { .. } => "invalid_connectivity",
            Error::SingularSubmatrix { .. } => "singular_submatrix",
            Error::NonPositiveInnovation { .. } => "non_positive_innovation",
            Error::Parse(_) => "parse",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
