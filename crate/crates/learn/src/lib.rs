//! Learning stack: dense networks with manual backpropagation and the
//! multi-agent actor-critic trainers built on them.

pub mod error;
pub mod maddpg;
pub mod neural;

pub use error::{NeuralError, TrainError, UnderfullBuffer};
pub use maddpg::{train, Experience, ReplayBuffer, Trainer, TrainerConfig, TrainerKind};
pub use neural::{count_trainable_parameters, soft_update, Activation, Adam, Mlp};
