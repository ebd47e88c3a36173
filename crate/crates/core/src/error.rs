use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A row failed to parse; no line context attached yet.
    #[error("{0}")]
    Malformed(String),

    /// A row failed to parse at a known 1-based line of the input file.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is not finite")]
    Diverged { epoch: usize, batch: usize },

    /// Checkpoint/vocabulary pair do not belong together or the file is damaged.
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
}

impl Error {
    /// Attach a 1-based line number to a row-level parse failure.
    pub fn at_line(self, line: usize) -> Error {
        match self {
            Error::Malformed(message) => Error::Parse { line, message },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
