//! Config-driven experiment runs: trials, strategies, threshold sweeps and
//! report files. The command line tool is a thin shell over this module.

mod config;
mod runner;

pub use config::{DatasetKind, Precision, RunConfig, OUTPUT_DIR_ENV};
pub use runner::{execute, run, sweep, trial_seed, write_batch, write_sweep, BatchResult};
