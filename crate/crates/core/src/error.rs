use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the operation's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A request that no parameter value can satisfy (e.g. an entropy above
    /// log2 of the alphabet size).
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("adaptive equalizer diverged at block {block}")]
    Adaptation { block: usize },

    #[error("symbol streams look misaligned (normalized correlation {correlation:.3e})")]
    Alignment { correlation: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
