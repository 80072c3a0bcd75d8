use std::path::PathBuf;

use thiserror::Error;

use skyvlc_learn::TrainError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },
    #[error("unknown preset `{0}` (try `desk`, `paper-default`, `alpha-sweep`, `min-rate-sweep`, `comp-ablation`, `motion-ablation`, `baselines`)")]
    UnknownPreset(String),
    #[error("bad override `{spec}`: {message}")]
    Override { spec: String, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("runs do not share seeds: {left:?} vs {right:?}")]
    SeedMismatch { left: Vec<u64>, right: Vec<u64> },
    #[error("no sweep point labelled `{0}` in summary")]
    MissingPoint(String),
}

impl HarnessError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::InvalidConfig { field: field.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }
}
