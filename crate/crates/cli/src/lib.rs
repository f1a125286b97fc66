//! Command-line experiments for the phaseonium engine simulator: TOML
//! configuration, parallel sweeps, CSV tables and a run manifest.

pub mod config;
pub mod experiments;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use phaseonium::engine::RunStatus;

pub use config::{Experiment, RunConfig};
pub use experiments::{run_experiment, ExperimentOutput};
pub use output::{Manifest, Table};

/// Exit status when every run finished cleanly.
pub const EXIT_OK: i32 = 0;
/// Exit status for a setup or I/O failure.
pub const EXIT_FATAL: i32 = 1;
/// Exit status when outputs were written but some run is not clean.
pub const EXIT_DEGRADED: i32 = 2;

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub status: RunStatus,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.status == RunStatus::Ok {
            EXIT_OK
        } else {
            EXIT_DEGRADED
        }
    }
}

/// Default output directory for an experiment.
pub fn default_out_dir(experiment: Experiment) -> PathBuf {
    Path::new("out").join(experiment.name())
}

/// Runs `experiment`, writes its tables, the resolved config and the manifest.
pub fn run(experiment: Experiment, config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    config.check_experiment(experiment)?;
    let started = output::unix_now();
    let mut resolved = config.clone();
    resolved.experiment = Some(experiment);

    let result = run_experiment(experiment, &resolved)?;
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut files = Vec::new();
    for t in &result.tables {
        files.push(t.write(out_dir)?);
    }
    for (name, value) in &result.json {
        files.push(output::write_json(out_dir, name, value)?);
    }
    let config_path = out_dir.join("config.toml");
    fs::write(&config_path, resolved.to_toml())
        .with_context(|| format!("cannot write {}", config_path.display()))?;
    files.push(config_path);

    let manifest = Manifest::new(
        experiment,
        &resolved,
        started,
        result.run_entries(),
        out_dir,
        &files,
    )?;
    files.push(output::write_json(out_dir, "manifest.json", &manifest)?);
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        files,
        status: result.status(),
    })
}
