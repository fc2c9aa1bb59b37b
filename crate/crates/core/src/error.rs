use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    /// A non-finite value appeared. `layer` is the weight-layer index when the
    /// failure happened inside a network pass.
    #[error("numeric error{}: {context}", .layer.map(|l| format!(" at layer {l}")).unwrap_or_default())]
    Numeric {
        layer: Option<usize>,
        context: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("network spec mismatch: {0}")]
    SpecMismatch(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// Failure attributed to one sampler chain.
    #[error("{role} chain {index}: {source}")]
    Chain {
        role: &'static str,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn numeric(context: impl Into<String>) -> Self {
        Error::Numeric {
            layer: None,
            context: context.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_chain(self, role: &'static str, index: usize) -> Self {
        Error::Chain {
            role,
            index,
            source: Box::new(self),
        }
    }

    /// True for errors that stem from non-finite arithmetic, possibly wrapped
    /// in a chain context.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Numeric { .. } => true,
            Error::Chain { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
