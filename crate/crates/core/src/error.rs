use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("keyword `{keyword}` is assigned to {count} adgroups (at most one allowed)")]
    RowSum { keyword: String, count: usize },

    #[error("invalid assignment entry {value} for keyword `{keyword}` (must be 0 or 1)")]
    NonBinary { keyword: String, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing {label} label on keyword `{keyword}`")]
    MissingLabel { label: &'static str, keyword: String },

    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),

    #[error("{path}:{line}: {message}")]
    Csv { path: String, line: u64, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
