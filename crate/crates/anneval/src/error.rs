use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnnevalError {
    #[error("unknown study {0}")]
    UnknownStudy(String),
    #[error("unknown annotator {0}")]
    UnknownAnnotator(String),
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("{field} = {value} is outside the scale {min}..={max}")]
    OutOfScale { field: &'static str, value: i64, min: u8, max: u8 },
    #[error("annotator {annotator} already rated item {item}")]
    Duplicate { item: String, annotator: String },
    #[error("asked for {wanted} items but only {available} are available")]
    InsufficientItems { wanted: usize, available: usize },
    #[error("items below the minimum annotator coverage: {0:?}")]
    UnderCovered(Vec<String>),
    #[error("study {0} already exists")]
    StudyExists(String),
    #[error("{0}")]
    Invalid(String),
    #[error("ledger {path}: {message}")]
    Ledger { path: String, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AnnevalError>;
