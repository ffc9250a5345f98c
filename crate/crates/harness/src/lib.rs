//! Experiment harness: seeded Monte-Carlo sweeps over the recovery solvers,
//! CSV result tables and `.cmat` matrix import.

pub mod config;
pub mod output;
pub mod run;

use std::path::{Path, PathBuf};

use mmv_core::ComplexMatrix;

pub use config::{ExperimentConfig, PilotSource, SolverSpec, SweepAxis};
pub use output::{emit_results, format_number, write_results, CSV_HEADER};
pub use run::{run_calibration, run_sweep, ExperimentRecord, RunOptions};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {}", .0.display(), .1)]
    Io(PathBuf, #[source] std::io::Error),
    #[error("cannot load {}: {}", .0.display(), .1)]
    Load(PathBuf, #[source] mmv_core::Error),
    #[error(transparent)]
    Core(#[from] mmv_core::Error),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("no records to write")]
    EmptyResults,
}

/// Reads a `.cmat` matrix, e.g. pilots exported by a trainer.
pub fn import_matrix(path: impl AsRef<Path>) -> Result<ComplexMatrix, HarnessError> {
    let path = path.as_ref();
    mmv_core::cmat::read_cmat(path).map_err(|e| HarnessError::Load(path.to_path_buf(), e))
}
