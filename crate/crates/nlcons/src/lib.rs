//! Scenario files, CSV and report output, random graphs and the batch
//! runner behind the `nlcons` binary.

pub mod batch;
pub mod format;
pub mod graphgen;
pub mod output;
pub mod run;
pub mod scenario;

pub use run::{run_scenario, RunError, RunOptions, RunOutcome};
pub use scenario::{Overrides, Scenario};
