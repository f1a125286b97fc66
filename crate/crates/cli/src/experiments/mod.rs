//! The five canned experiments. Each has a `compute` step returning plain
//! data and a `tables` step turning that data into CSV tables.

pub mod cascade;
pub mod engine_sweep;
pub mod mi_vs_work;
pub mod temp_ratio;
pub mod thermalize;

use anyhow::Result;
use phaseonium::engine::RunStatus;

use crate::config::{Experiment, RunConfig};
use crate::output::{RunEntry, Table};

/// Environment variable holding the worker-pool width for sweeps.
pub const WORKERS_ENV: &str = "PHASEONIUM_WORKERS";

/// Tables, JSON documents and per-run statuses produced by one experiment.
pub struct ExperimentOutput {
    pub tables: Vec<Table>,
    pub json: Vec<(String, serde_json::Value)>,
    pub runs: Vec<(String, RunStatus)>,
}

impl ExperimentOutput {
    pub fn status(&self) -> RunStatus {
        self.runs.iter().map(|(_, s)| *s).max().unwrap_or_default()
    }

    pub fn run_entries(&self) -> Vec<RunEntry> {
        self.runs
            .iter()
            .map(|(id, s)| RunEntry {
                id: id.clone(),
                status: s.label().to_string(),
            })
            .collect()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// Rayon pool sized from [`WORKERS_ENV`]; unset or 0 uses every core.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let width = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| anyhow::anyhow!("{WORKERS_ENV}={v} is not a non-negative integer"))?,
        Err(_) => 0,
    };
    Ok(rayon::ThreadPoolBuilder::new().num_threads(width).build()?)
}

pub fn run_experiment(experiment: Experiment, config: &RunConfig) -> Result<ExperimentOutput> {
    match experiment {
        Experiment::TempRatio => temp_ratio::run(&config.temp_ratio),
        Experiment::Thermalize => thermalize::run(&config.thermalize),
        Experiment::EngineSweep => engine_sweep::run(&config.engine_sweep),
        Experiment::CascadeCycle => cascade::run(&config.cascade_cycle),
        Experiment::MiVsWork => mi_vs_work::run(&config.mi_vs_work),
    }
}

/// `n` evenly spaced points on [a, b]; a single point sits at `a`.
pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// True when each element is strictly above the previous one.
pub fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0])
}

/// True when each element is strictly below the previous one.
pub fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        assert_eq!(linspace(2.0, 3.0, 1), vec![2.0]);
        assert!(linspace(0.0, 1.0, 0).is_empty());
    }

    #[test]
    fn monotonicity_helpers() {
        assert!(strictly_increasing(&[1.0, 2.0, 3.0]));
        assert!(!strictly_increasing(&[1.0, 1.0]));
        assert!(strictly_decreasing(&[3.0, 2.0]));
        assert!(strictly_decreasing(&[]));
    }
}
