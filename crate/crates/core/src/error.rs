use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    /// A manifest line references something that cannot be found.
    #[error("{manifest}:{line}: cannot resolve `{target}`: {reason}")]
    Resolution {
        manifest: PathBuf,
        line: usize,
        target: String,
        reason: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("mining error: {0}")]
    Mining(String),

    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite {term} encountered during optimization")]
    NonFinite { term: &'static str },

    #[error("config error: {0}")]
    Config(String),

    #[error("search stage `{stage}` failed: every candidate diverged")]
    Search { stage: &'static str },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn shape_check(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape(format!(
            "{what}: expected length {expected}, got {got}"
        )));
    }
    Ok(())
}
