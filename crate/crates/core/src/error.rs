use thiserror::Error;

/// Errors raised by the estimation pipeline, tagged by the module that raised them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("tensor: {0}")]
    Tensor(String),
    #[error("array: {0}")]
    Array(String),
    #[error("cp-als: {0}")]
    Cp(String),
    #[error("doa: {0}")]
    Doa(String),
    #[error("doa (target {target}): {source}")]
    Target {
        target: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("experiments: {0}")]
    Experiment(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Name of the module the error originated in.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Tensor(_) => "tensor-core",
            Error::Array(_) => "array-model",
            Error::Cp(_) => "cp-als",
            Error::Doa(_) | Error::Target { .. } => "doa-rooting",
            Error::Experiment(_) => "experiments",
            Error::Config(_) => "cli",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
