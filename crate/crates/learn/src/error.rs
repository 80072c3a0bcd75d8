use thiserror::Error;

use skyvlc_core::EnvError;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("input has {got} features, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("inconsistent network shape: {0}")]
    Shape(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
#[error("replay buffer holds {have} records, minibatch needs {need}")]
pub struct UnderfullBuffer {
    pub have: usize,
    pub need: usize,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("invalid trainer setting `{field}`: {message}")]
    Config { field: &'static str, message: String },
    #[error("{0}")]
    Callback(String),
}
