use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("precision must be at least 16 digits, got {0}")]
    Precision(u32),
    #[error("cannot parse decimal number {0:?}")]
    Parse(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not a probability vector: {0}")]
    NotSimplex(String),
    #[error("anchor lies on the simplex boundary; Bregman divergence undefined for {0}")]
    BoundaryAnchor(String),
    #[error("game file: {0}")]
    GameFile(String),
    #[error("trajectory csv: {0}")]
    Csv(String),
    #[error("trajectory is not a run on the hard 2x2 instance")]
    NotHardInstance,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
