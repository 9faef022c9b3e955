//! Experiment front end: configuration, output files, cost sweeps and the
//! property-verification suites behind the `sparse-ia` binary.

pub mod config;
pub mod output;
pub mod sweep;
pub mod verify;

pub use config::{ConfigMap, DataSource, ExperimentPlan, MNIST_DIR_ENV};
pub use output::write_atomic;
pub use sweep::{cost_sweep, write_sweep_csv, SweepRow};
pub use verify::{run_all, PropertyReport, VerifyOptions};
