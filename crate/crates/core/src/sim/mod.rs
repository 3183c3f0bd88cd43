//! Closed-loop simulation: environment, sensors, scenario runner and logs.

pub mod config;
pub mod environment;
pub mod log;
pub mod sensors;
pub mod runner;
pub mod scenarios;

pub use config::{Mode, ScenarioConfig};
pub use log::{Metrics, RunLog};
pub use runner::run_scenario;
