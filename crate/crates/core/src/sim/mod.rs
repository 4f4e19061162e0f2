//! Scenario engine, experiments and output files.

pub mod config;
pub mod engine;
pub mod experiments;
pub mod output;
pub mod sweep;

pub use config::{Compensation, LeaderMode, ScenarioConfig, StartJitter};
pub use engine::{run_scenario, LogRow, RunResult, RunSummary, SimLog, LOG_COLUMNS};
pub use experiments::Experiment;
