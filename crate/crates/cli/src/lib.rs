//! Command-line front end: configuration, run orchestration, CSV/SVG
//! output, checkpoints and manifests.

pub mod acceptance;
pub mod app;
pub mod checkpoint;
pub mod config;
pub mod output;

pub use app::{execute_run, main_with_args};
pub use config::{parse_config, parse_config_str, RunConfig};
