use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty fine-tune set")]
    EmptyFineTuneSet,

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("snapshot decode: {0}")]
    Snapshot(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    /// One message per violated field, each starting with the field name.
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("episode {episode}: {source}")]
    Episode {
        episode: u32,
        #[source]
        source: Box<Error>,
    },

    /// A failed run; `strategy` is absent while training the initial network.
    #[error("{}trial {trial}: {source}", strategy.map_or(String::new(), |s| format!("strategy {s}, ")))]
    Run {
        strategy: Option<u8>,
        trial: u32,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
