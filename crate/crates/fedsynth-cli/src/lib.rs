//! Experiment driver for the federated simulator: configuration with named
//! presets, grid execution, and consolidated reporting.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{load_config, preset_config, ClassifierConfig, ExperimentArm, ExperimentConfig};
pub use report::{build_report, ReportTable};
pub use runner::{run_experiment, run_single, RunSummary};
