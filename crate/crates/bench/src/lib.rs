//! Benchmark harness: the built-in experiments, backend calibration and
//! CSV reports.

pub mod calibrate;
pub mod experiment;
pub mod report;

pub use calibrate::{calibrate_heuristics, default_grid, CalibrateOptions, Calibration};
pub use experiment::{
    builtin_experiment, run_experiment, run_on, BenchError, DatasetKind, ExperimentConfig, ExperimentOutcome, Model,
};
pub use report::{emit_csv, BenchRecord};
