use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: malformed JSON: {source}", path.display())]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("sample {id}: unknown label {label:?}")]
    UnknownLabel { id: String, label: String },

    #[error("sample {id}: {modality} has length {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        modality: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("duplicate label name {0:?}")]
    DuplicateLabel(String),

    #[error("feature vector has length {found}, expected {expected}")]
    FeatureLength { expected: usize, found: usize },

    #[error("invalid split ratios {0:?}: must be non-negative and sum to 1")]
    InvalidRatios([f64; 3]),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("vocabulary would be empty: no token reaches the document-frequency threshold")]
    EmptyCorpus,

    #[error("training diverged (non-finite loss) at learning rate {learning_rate}")]
    Diverged { learning_rate: f64 },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("split {0} has no samples")]
    EmptyPart(String),

    #[error("all samples removed")]
    AllSamplesRemoved,

    #[error("split {split}: need {needed} candidates, only {available} available")]
    InsufficientCandidates {
        split: String,
        needed: usize,
        available: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("sample {0:?} is missing from the split assignment or vote records")]
    MissingSample(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
