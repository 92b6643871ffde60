use std::path::PathBuf;

/// Crate-wide error type. Variants carry enough context to point at the
/// offending file, chunk, layer or parameter.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("decode error in {path}: {detail}")]
    Decode { path: PathBuf, detail: String },

    #[error("unsupported format in {path}: {detail}; supported encodings: {supported}")]
    UnsupportedFormat {
        path: PathBuf,
        detail: String,
        supported: String,
    },

    #[error("shape mismatch: {detail}")]
    Shape { detail: String },

    #[error("configuration error: {detail}")]
    Config { detail: String },

    #[error("build error at layer {layer_index} ({layer}): incoming shape {incoming:?}: {detail}")]
    Build {
        layer_index: usize,
        layer: String,
        incoming: Vec<usize>,
        detail: String,
    },

    #[error("parse error: {detail}")]
    Parse { detail: String },

    #[error("state error: {detail}")]
    State { detail: String },

    #[error("index error at position {position}: {detail}")]
    Index { position: usize, detail: String },

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },

    #[error("metadata error: {detail}")]
    Metadata { detail: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn shape(detail: impl Into<String>) -> Self {
        Error::Shape {
            detail: detail.into(),
        }
    }

    pub fn config(detail: impl Into<String>) -> Self {
        Error::Config {
            detail: detail.into(),
        }
    }

    pub fn parse(detail: impl Into<String>) -> Self {
        Error::Parse {
            detail: detail.into(),
        }
    }

    pub fn state(detail: impl Into<String>) -> Self {
        Error::State {
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
