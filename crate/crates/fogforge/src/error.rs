use std::path::PathBuf;

use fogforge_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("training diverged: {message}")]
    Divergence {
        message: String,
        /// Where the last good checkpoint was written, if any.
        checkpoint: Option<PathBuf>,
    },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }

    /// Process exit code: 2 for bad input, 3 for numeric divergence, 1
    /// otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Divergence { .. } | Error::Core(CoreError::Divergence(_)) => 3,
            Error::Io { .. } | Error::Json { .. } | Error::Csv { .. } | Error::Schema { .. } | Error::Usage(_) => 2,
            Error::Core(
                CoreError::Config(_)
                | CoreError::Usage(_)
                | CoreError::InvalidApplication(_)
                | CoreError::InvalidDevices(_)
                | CoreError::InvalidPlacement(_)
                | CoreError::TooLarge { .. }
                | CoreError::Dimension(_)
                | CoreError::Architecture(_),
            ) => 2,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Usage("x".into()).exit_code(), 2);
        assert_eq!(Error::from(CoreError::Divergence("nan".into())).exit_code(), 3);
        assert_eq!(Error::Divergence { message: "nan".into(), checkpoint: None }.exit_code(), 3);
        assert_eq!(Error::from(CoreError::Terminal).exit_code(), 1);
        assert_eq!(Error::io("a", std::io::Error::from(std::io::ErrorKind::NotFound)).exit_code(), 2);
    }
}
