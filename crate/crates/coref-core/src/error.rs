use thiserror::Error;

/// Errors surfaced by the core library.
///
/// The variants map onto the CLI's stable exit codes: `Io` → 2,
/// `Format` → 3, `Training` → 4. Everything else is a programming or
/// configuration mistake and maps to the generic failure code.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed record at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("span ({0}, {1}) is not among the pruned spans")]
    SpanNotFound(usize, usize),

    #[error("training failure: {0}")]
    Training(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn format(line: usize, msg: impl Into<String>) -> Self {
        CoreError::Format {
            line,
            msg: msg.into(),
        }
    }
}
