use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row} has {found} fields, header has {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("unknown class label `{0}`")]
    UnknownLabel(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("shape mismatch: expected {expected} columns, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("k = {k} exceeds the {available} available candidates")]
    KTooLarge { k: usize, available: usize },

    #[error("class {class} has a single sample and cannot be oversampled")]
    CannotInterpolate { class: usize },

    #[error("ROC needs both positive and negative samples")]
    SingleClassTruth,

    #[error("score at index {index} is not finite")]
    NonFiniteScore { index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than by configuration
    /// or an internal fault.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Csv(_)
                | Error::MissingColumn(_)
                | Error::Parse { .. }
                | Error::Ragged { .. }
                | Error::UnknownLabel(_)
                | Error::Empty(_)
                | Error::Shape { .. }
                | Error::LengthMismatch { .. }
                | Error::LabelOutOfRange { .. }
                | Error::CannotInterpolate { .. }
                | Error::SingleClassTruth
                | Error::NonFiniteScore { .. }
        )
    }

    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::InvalidConfig(_) | Error::KTooLarge { .. })
    }
}
