//! Pipeline, configuration and file formats behind the `ev-stab` command.

pub mod artifacts;
pub mod config;
pub mod figure;
pub mod orbits;
pub mod pipeline;
pub mod reports;
pub mod state;

pub use config::{parse_config, ConfigErrors, RunConfig};
pub use pipeline::{build_state, exit_code, run_pipeline, PipelineOutcome, PipelineReport};
