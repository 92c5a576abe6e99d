use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure while parsing a single normalized annotation line.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnotationError {
    #[error("expected 5 fields (cls xc yc w h), found {0}")]
    FieldCount(usize),
    #[error("field {field} is not a number: {token:?}")]
    Number { field: &'static str, token: String },
    #[error("field {field} = {value} is outside [0, 1]")]
    Range { field: &'static str, value: f64 },
    #[error("box has no area after clamping to the image")]
    Degenerate,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}:{line}: {source}", path.display())]
    Annotation {
        path: PathBuf,
        line: usize,
        #[source]
        source: AnnotationError,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("frame {frame_id}: {msg}")]
    Load { frame_id: String, msg: String },
    #[error("cannot decode image {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("oracle refused instance: {0}")]
    OracleRefused(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Configuration problems map to CLI exit code 1.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
