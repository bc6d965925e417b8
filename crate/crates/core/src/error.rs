use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),

    #[error("invalid alpha strategy: {0}")]
    InvalidAlpha(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infinite prophet value")]
    InfiniteProphetValue,

    #[error("unresolved tie at position {position} for variable {variable}")]
    UnresolvedTie { position: usize, variable: usize },

    #[error("target outside atom gap")]
    TargetOutsideAtomGap,

    #[error("division by zero guarantee at index {0}")]
    DivisionByZeroGuarantee(usize),

    #[error("level {0} is zero, its logarithm is undefined")]
    ZeroLevel(usize),

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("shooting bracket failure: {0}")]
    ShootingFailure(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("json error: {0}")]
    Json(String),
}

impl Error {
    /// Whether the error comes from bad input rather than from a computation
    /// that failed on valid input.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidDistribution(_)
                | Error::InvalidInstance(_)
                | Error::InvalidProbability(_)
                | Error::InvalidAlpha(_)
                | Error::InvalidArgument(_)
                | Error::SizeGuard(_)
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
