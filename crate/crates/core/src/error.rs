use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("numeric overflow: {0}")]
    Numeric(String),

    #[error("simulation produced a non-finite state at step {step} of path {path}")]
    Simulation { path: usize, step: usize },

    #[error("training loss became non-finite at step {0}")]
    Training(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 1 for bad input or I/O, 2 for numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Format { .. } | Error::Io(_) | Error::Csv(_) => 1,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Config("x".into()).exit_code(), 1);
        assert_eq!(Error::Io(std::io::Error::other("x")).exit_code(), 1);
        assert_eq!(Error::Numeric("x".into()).exit_code(), 2);
        assert_eq!(Error::Simulation { path: 0, step: 3 }.exit_code(), 2);
        assert_eq!(Error::Training(7).exit_code(), 2);
    }
}
