use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] gloctm_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: not found", .0.display())]
    MissingInput(PathBuf),
    #[error("{}: line {line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Config(String),
    #[error("{}: checkpoint does not match: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },
    #[error("{}: another process holds the output directory", .0.display())]
    Locked(PathBuf),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, message: message.into() }
    }

    /// 2 for configuration and validation failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        use gloctm_core::Error as C;
        match self {
            Error::Config(_) | Error::Toml { .. } | Error::MissingInput(_) | Error::Parse { .. } => 2,
            Error::Core(C::Config(_) | C::InvalidArgument(_) | C::Precondition(_)) => 2,
            _ => 1,
        }
    }
}
