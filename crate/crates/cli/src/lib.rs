//! Scenario files, subcommand orchestration and artifact export for `chemo-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod export;
pub mod field_file;
pub mod manifest;
pub mod run;
pub mod spec;
pub mod verify;

pub use error::{CliError, CliResult};
pub use run::{run, Command, RunOptions, RunOutcome};
pub use spec::{load_scenario, Overrides, ScenarioFile};
