use std::path::PathBuf;

/// Errors produced by the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("degenerate feature: norm below {}", crate::linalg::NORM_EPS)]
    DegenerateFeature,

    #[error("degenerate classifier: row {row} has zero norm")]
    DegenerateClassifier { row: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("line {line}: {kind}")]
    Parse { line: usize, kind: ParseErrorKind },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// What went wrong while parsing a line-oriented file.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("record has {got} values, header declares dim {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown split tag {0:?}")]
    UnknownSplit(String),
    #[error("non-finite value")]
    NonFinite,
    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },
    #[error("malformed record: {0}")]
    MalformedRecord(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, kind: ParseErrorKind) -> Self {
        Error::Parse { line, kind }
    }

    /// True for errors caused by the caller's inputs rather than the engine.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Json(_))
    }
}
