//! Config-driven experiment grids over named datasets, with report emission.
//!
//! Each kind expands into cells. A cell is one trained model evaluated on one
//! test set. Cells run on a bounded worker pool and a failing cell is
//! recorded in the report instead of aborting the run.

mod config;
mod report;
mod run;

pub use config::{BackendConfig, ExperimentConfig, ExperimentKind, DEFAULT_FRACTIONS, DEFAULT_JOINT_CAP};
pub use report::{emit_report, CellResult, ExperimentReport, Fingerprint, ReportFormat};
pub use run::{dataset_digest, run_experiment};
