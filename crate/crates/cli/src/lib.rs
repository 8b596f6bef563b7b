//! Experiment runner for the `mimo-harq` engines: TOML configs in, CSV,
//! manifest and plot-data files out.

pub mod config;
pub mod experiment;
pub mod figures;

pub use config::{load_spec, parse_spec, Backend, ConfigError, ExperimentKind, ExperimentSpec, Manifest};
pub use experiment::{run_experiment, write_outputs, OutputError, ResultRow};
