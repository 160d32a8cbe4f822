//! Configuration loading and CSV output.

mod config;
mod csv;

pub use config::{load_config, parse_config, ExperimentConfig, RunConfig};
pub use csv::{format_float, write_csv, Cell, CsvArtifact};
