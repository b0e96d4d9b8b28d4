//! Scenario loading, end-to-end runs, metrics emission and chain verification.

mod config;
mod metrics;
mod runner;
mod verify;

pub use config::{load_scenario, SatelliteConfig, ScenarioConfig, ScenarioError, ValidationError};
pub use metrics::MetricsReport;
pub use runner::{run_scenario, CircleNode, RunError, RunOutput};
pub use verify::{verify_chain_file, ChainVerdict};
