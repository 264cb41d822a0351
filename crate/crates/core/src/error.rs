use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left_width}x{left_height} vs {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: usize,
        left_height: usize,
        right_width: usize,
        right_height: usize,
    },
    #[error("binary map is not thin: 2x2 block at ({x}, {y})")]
    NotThin { x: usize, y: usize },
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(PathBuf),
    #[error("no matching image/mask pairs found")]
    NoPairs,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("external predictor failed: {0}")]
    ExternalFailure(String),
    #[error("missing predictor input: {0}")]
    MissingInput(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for errors caused by user-supplied files or values.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::ExternalFailure(_))
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
