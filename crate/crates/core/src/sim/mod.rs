//! Scenario-driven multi-node simulator and metric emission.

pub mod config;
pub mod devnet;
pub mod metrics;
pub mod network;
pub mod node;
pub mod report;
pub mod runner;
pub mod scenarios;
pub mod world;

pub use config::{ConfigInvalid, ScenarioConfig};
pub use metrics::{
    complaints_per_million, compute_complaints_per_million, compute_scrub_success_rate,
    MetricsReport,
};
pub use report::{write_run, AuditRow};
pub use runner::{run_scenario, RunOutput, RunStats, Simulation};
