//! Experiment orchestration: presets, sweeps, seeded parallel runs, metrics
//! files, summaries and paired comparisons.

pub mod compare;
pub mod error;
pub mod experiment;
pub mod oracle_check;
pub mod runner;
pub mod stats;

pub use compare::{compare, CompareTest, ComparisonReport, Metric};
pub use error::HarnessError;
pub use experiment::{preset, ExperimentSpec, Sweep, SweepPoint, PRESETS};
pub use runner::{run_experiment, PointSummary, SeedResult, Summary, CODE_HASH};
