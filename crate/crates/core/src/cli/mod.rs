//! Config files and experiment runs behind the `skewprod` binary.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_config_with, ExperimentConfig, ExperimentKind, Overrides};
pub use run::{execute, run_dir, run_experiment, Execution, Outcome, RunRecord};
