use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cluster must contain at least one N spin")]
    EmptyCluster,
    #[error("Hilbert space dimension {0} exceeds the supported maximum of 64")]
    TooLarge(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("integration error: {0}")]
    Integration(String),
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: {msg}")]
    Semantic { line: usize, col: usize, msg: String },
    #[error("unknown builtin sequence `{0}`")]
    UnknownBuiltin(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("sweep point {index}: {source}")]
    Sweep {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("fit error: {0}")]
    Fit(String),
    #[error("inconsistent data: {0}")]
    Inconsistent(String),
    #[error("localization failed: {0}")]
    Localization(String),
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
