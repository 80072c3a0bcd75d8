//! Simulation core for a UAV-mounted visible-light network: motion,
//! optical channel, NOMA/CoMP link layer, the multi-agent environment and
//! brute-force reference evaluators.

pub mod channel;
pub mod env;
pub mod error;
pub mod kinematics;
pub mod link;
pub mod oracle;

pub use channel::{channel_gain, LinkGeometry, OpticalParams};
pub use env::{Environment, EpisodeMetrics, Policy, ScenarioConfig, Transition, World};
pub use error::{ChannelError, ConfigError, EnvError, LinkError, OracleError};
pub use kinematics::{Cylinder, SlotClock, Vec3};
pub use link::{AllocationDecision, InterferenceMode, LinkState, RadioParams, RateReport};
