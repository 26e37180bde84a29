//! Configuration, sweep orchestration and output management for
//! `dtn-cluster-sim`.

pub mod config;
pub mod sweep;

pub use config::{ConfigError, Overrides, RunConfig};
pub use sweep::{run_sweep, SweepError, SweepOutcome};
