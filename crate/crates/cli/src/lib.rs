//! Experiment runner for the damped Wentzell wave problem: JSON
//! configuration in, CSV/JSON/SVG artifacts and a pass/fail summary out.

pub mod config;
pub mod runner;
pub mod svg;

pub use config::{parse_config, parse_config_str, ConfigError, RunConfig};
pub use runner::{input_digest, run, run_with_threads, threads_from_env, Command, RunError, RunSummary};
