use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("node index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("not a generalized Laplacian: {0}")]
    NotLaplacian(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("diagonal entry {index} of the transition kernel is too small to split ({value:e})")]
    SplitFailure { index: usize, value: f64 },

    #[error("precision {0} is not a power of two")]
    NotPowerOfTwo(u32),

    #[error("integer accumulator overflow")]
    Overflow,

    #[error("graph learning failed: {0}")]
    LearningFailed(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("BD-rate needs at least 4 points per curve, got {0}")]
    InsufficientPoints(usize),

    #[error("RD curves do not overlap in PSNR")]
    NoOverlap,

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error comes from a numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Eigen(_)
                | Error::Singular(_)
                | Error::SplitFailure { .. }
                | Error::Overflow
                | Error::LearningFailed(_)
        )
    }
}
