//! Declarative experiment sweeps over datasets, architectures, augmentations
//! and regularization strengths, with per-run certificates and report files.

pub mod config;
pub mod error;
pub mod report;
pub mod runner;

pub use config::{Arm, Experiment, ExperimentConfig};
pub use error::CliError;
pub use report::{parse_rows, rows_to_csv, summarize, summary_text, CellSummary, ReportRow};
pub use runner::{compare_baseline, describe, run_experiment, write_outputs, Report};
