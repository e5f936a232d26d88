use std::path::PathBuf;

use copyalign_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("row {row} has zero norm")]
    DegenerateRow { row: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("insufficient input: {0}")]
    InsufficientInput(String),

    #[error("pair generation failed after {attempts} attempts")]
    Generation { attempts: usize },

    #[error("similarity map {rows}x{cols} is too small; need at least 2x2")]
    InputTooSmall { rows: usize, cols: usize },

    #[error("score of an empty path is undefined")]
    EmptyPath,

    #[error("inverted segment [{start}, {end}]")]
    InvertedSegment { start: f64, end: f64 },

    #[error("ground truth set is empty; recall is undefined")]
    EmptyGroundTruth,

    #[error("unknown aligner `{0}`")]
    UnknownAligner(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss is {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Self::Format { path: path.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// True for errors caused by bad or unreadable input data.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Self::Format { .. }
                | Self::Io { .. }
                | Self::DegenerateRow { .. }
                | Self::EmptyGroundTruth
                | Self::InsufficientInput(_)
                | Self::Dimension(_)
        )
    }

    /// True for numeric failures (divergence, non-finite values).
    pub fn is_numeric_error(&self) -> bool {
        matches!(self, Self::Divergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
