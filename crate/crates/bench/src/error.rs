use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// Some seeds failed; results for the others were written.
    #[error("partial results: {0}")]
    Partial(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {path}: {msg}")]
    Format { path: String, msg: String },
}

impl BenchError {
    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> u8 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Numeric(_) => 3,
            BenchError::Partial(_) => 4,
            BenchError::Io { .. } | BenchError::Format { .. } => 1,
        }
    }

    pub(crate) fn io(context: impl std::fmt::Display, path: &Path) -> impl FnOnce(std::io::Error) -> Self {
        let context = format!("{context} {}", path.display());
        move |source| BenchError::Io { context, source }
    }

    pub(crate) fn format(path: &Path, msg: impl std::fmt::Display) -> Self {
        BenchError::Format {
            path: path.display().to_string(),
            msg: msg.to_string(),
        }
    }
}

impl From<raps_core::Error> for BenchError {
    fn from(e: raps_core::Error) -> Self {
        match e {
            raps_core::Error::Config(m) | raps_core::Error::Input(m) => BenchError::Config(m),
            raps_core::Error::Numeric(m) => BenchError::Numeric(m),
        }
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
