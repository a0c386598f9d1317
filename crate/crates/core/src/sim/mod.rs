//! Scenario configuration and the epoch-driven simulation loop.

pub mod config;
pub mod harness;
pub mod output;

pub use config::{ConfigError, Diagnostic, FlowUniverse, Scenario};
pub use harness::{run, run_with_plan, EpochReport, Plan, RunOptions, SchemeReport, SimError};
pub use output::{report_csv, write_run_dir};
