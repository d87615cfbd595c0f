use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("single-class {0}")]
    SingleClass(String),

    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("out-of-order step: expected {expected}, got {got}")]
    OutOfOrder { expected: usize, got: usize },

    #[error("group too small: need at least 2 trajectories, got {0}")]
    GroupTooSmall(usize),

    #[error("mismatched group structure: {0}")]
    MismatchedGroups(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse failure class used for CLI exit codes and the one-line error
/// prefix printed on stderr.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Parse,
    Dimension,
    Config,
    MissingClass,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Parse => 2,
            ErrorCategory::Dimension => 3,
            ErrorCategory::Config => 4,
            ErrorCategory::MissingClass => 5,
            ErrorCategory::Io => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Parse => "parse",
            ErrorCategory::Dimension => "dimension",
            ErrorCategory::Config => "config",
            ErrorCategory::MissingClass => "missing-class",
            ErrorCategory::Io => "io",
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Parse(_) | Error::NonFinite { .. } => ErrorCategory::Parse,
            Error::Dimension(_) => ErrorCategory::Dimension,
            Error::SingleClass(_) => ErrorCategory::MissingClass,
            Error::Io(_) => ErrorCategory::Io,
            Error::Domain(_)
            | Error::Empty(_)
            | Error::Config(_)
            | Error::OutOfOrder { .. }
            | Error::GroupTooSmall(_)
            | Error::MismatchedGroups(_) => ErrorCategory::Config,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
