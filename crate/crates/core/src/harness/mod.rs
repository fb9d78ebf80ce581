//! Desk-scale reproductions of the rate experiments.
//!
//! Each runner is a pure function of an [`ExperimentConfig`] built on the
//! lower modules and returns an [`ExperimentOutput`]; [`emit_outputs`]
//! writes it to disk. Randomness is derived from the master seed and the
//! cell index, so results do not depend on thread count.

mod common;
pub mod config;
pub mod datasets;
mod dim_sweep;
mod distill;
mod emit;
mod eps_search;
pub mod fit;
mod mse_iter;
mod mse_sample;
pub mod plot;
mod simulate;
mod stopping;
mod table;

use std::time::Instant;

pub use common::{gaussian_setup, mean_and_se};
pub use config::{Experiment, ExperimentConfig};
pub use dim_sweep::run_dim_sweep;
pub use distill::run_distill;
pub use emit::{declared_files, describe_grid, emit_outputs, summary_with_checks};
pub use eps_search::{bisect_log_epsilon, run_eps_search, scan_log_epsilon, SearchResult};
pub use mse_iter::run_mse_iter;
pub use mse_sample::run_mse_sample;
pub use simulate::run_simulate;
pub use stopping::{estimate_stopping_k, StoppingEstimate};
pub use table::{run_id, Check, ResultRow, ResultTable, RowFlag, Summary};

use crate::error::Result;

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub table: ResultTable,
    pub summary: Summary,
    pub checks: Vec<Check>,
    /// Additional files (plots, checkpoints, trajectories) by name.
    pub files: Vec<(String, Vec<u8>)>,
    pub wall_time_s: f64,
}

impl ExperimentOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Dispatches on `cfg.experiment` and records wall time.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let start = Instant::now();
    let mut out = match cfg.experiment {
        Experiment::MseSample => run_mse_sample(cfg),
        Experiment::MseIter => run_mse_iter(cfg),
        Experiment::DimSweep => run_dim_sweep(cfg),
        Experiment::EpsSearch => run_eps_search(cfg),
        Experiment::Distill => run_distill(cfg),
        Experiment::Simulate => run_simulate(cfg),
    }?;
    out.wall_time_s = start.elapsed().as_secs_f64();
    Ok(out)
}
