use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Error, Debug)]
pub enum CoreError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("non-finite gradient in parameter {name}")]
    NonFiniteGradient { name: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("{path}: line {line}: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("feature file {path}: header declares {header:?} but manifest declares {manifest:?}")]
    FeatureShapeMismatch {
        path: PathBuf,
        header: (u32, u32),
        manifest: (u32, u32),
    },

    #[error("{path}: {message}")]
    BadFile { path: PathBuf, message: String },

    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn invalid<S: Into<String>>(message: S) -> Self {
        CoreError::InvalidArgument(message.into())
    }

    /// True for failures of numerical origin (NaN/Inf), as opposed to data errors.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            CoreError::NonFiniteGradient { .. } | CoreError::NonFiniteLoss { .. }
        )
    }
}
