use thiserror::Error;

pub type Result<T, E = FjError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FjError {
    /// Argument outside the domain of a transform (e.g. MGF of an exponential at θ ≥ rate).
    #[error("argument {theta} outside transform domain (boundary {boundary})")]
    Domain { theta: f64, boundary: f64 },

    #[error("no positive decay rate for server {server}: {reason}")]
    NoRoot { server: usize, reason: String },

    #[error("system is not stable: {0}")]
    Stability(String),

    #[error("value {value} outside support {{1..{n}}}")]
    Range { value: usize, n: usize },

    #[error("parameter ordering violated: {0}")]
    ParameterOrder(String),

    #[error("series diverges: {0}")]
    Divergence(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty sample set")]
    Empty,

    #[error("i/o error: {0}")]
    Io(String),
}

impl FjError {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            FjError::Config(_) | FjError::InvalidParameter(_) | FjError::Range { .. } => 2,
            FjError::Io(_) => 4,
            _ => 3,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FjError::InvalidParameter(msg.into())
    }
}

impl From<std::io::Error> for FjError {
    fn from(e: std::io::Error) -> Self {
        FjError::Io(e.to_string())
    }
}
