use thiserror::Error;

/// Errors raised across the crate.
///
/// The CLI maps [`Error::Budget`] to exit code 3 and everything
/// configuration-shaped to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("step count {n} does not nest in a lattice of level {level}")]
    NotNested { n: usize, level: u32 },

    #[error("index {index} out of range (max {max})")]
    OutOfRange { index: usize, max: usize },

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("coupling violation: {0}")]
    Coupling(String),

    #[error("unknown catalogue key `{0}`")]
    UnknownKey(String),

    #[error("assumption profile violation: {0}")]
    Assumption(String),

    #[error("seminorm diverges: {0}")]
    Divergent(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(format!($($arg)*))
    };
}
pub(crate) use invalid;
