use thiserror::Error;

/// A configuration value is out of range. `field` is a dotted config path.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("invalid config field `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ChannelError {
    #[error("half-power angle {0} rad gives cos <= 0 or cos == 1; Lambertian order undefined")]
    HalfPowerAngle(f64),
    #[error("UAV and user are co-located; link geometry undefined")]
    Degenerate,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinkError {
    #[error("decoder user {decoder} is not strictly stronger than user {user} on UAV {uav}")]
    DecoderNotStronger { user: usize, decoder: usize, uav: usize },
    #[error("allocation is {got:?} but link state is {expected:?} (users x UAVs)")]
    Shape { expected: (usize, usize), got: (usize, usize) },
    #[error("allocation invalid: {0}")]
    Allocation(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("policy dimension mismatch: expected {expected} {what}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
}
