//! Single-cavity Otto cycles over a grid of hot and cold fuel phases.

use std::f64::consts::PI;

use anyhow::Result;
use phaseonium::engine::{run_engine, BathSpec, EngineConfig, RunStatus};
use rayon::prelude::*;

use super::{worker_pool, ExperimentOutput};
use crate::config::EngineSweepConfig;
use crate::output::{Cell, Table};

#[derive(Clone, Debug)]
pub struct SweepCell {
    pub i: usize,
    pub j: usize,
    pub phi_hot: f64,
    pub phi_cold: f64,
    pub outcome: std::result::Result<SweepOutcome, String>,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub eta: Option<f64>,
    pub eta_ca_classical: Option<f64>,
    pub eta_ca_apparent: Option<f64>,
    pub eta_otto: f64,
    pub t_hot_classical: Option<f64>,
    pub t_cold_classical: Option<f64>,
    pub q_hot: f64,
    pub w_net: f64,
    pub collisions_hot: u64,
    pub collisions_cold: u64,
    pub cycles: usize,
    pub limit_cycle: bool,
    pub status: RunStatus,
}

impl SweepOutcome {
    /// η over the classical Curzon-Ahlborn bound.
    pub fn ratio(&self) -> Option<f64> {
        Some(self.eta? / self.eta_ca_classical?)
    }
}

fn with_phi(spec: &BathSpec, phi: f64) -> BathSpec {
    match *spec {
        BathSpec::Temperature { temperature, .. } => BathSpec::Temperature { temperature, phi },
        BathSpec::Alpha { alpha, .. } => BathSpec::Alpha { alpha, phi },
    }
}

pub fn cell_config(template: &EngineConfig, phi_hot: f64, phi_cold: f64) -> EngineConfig {
    let mut cfg = template.clone();
    cfg.hot.spec = with_phi(&template.hot.spec, phi_hot);
    cfg.cold.spec = with_phi(&template.cold.spec, phi_cold);
    cfg
}

fn run_cell(cfg: &EngineConfig) -> phaseonium::Result<SweepOutcome> {
    let run = run_engine(cfg)?;
    let last = run.last();
    Ok(SweepOutcome {
        eta: last.eta,
        eta_ca_classical: last.eta_ca_classical,
        eta_ca_apparent: last.eta_ca,
        eta_otto: last.eta_otto_ideal,
        t_hot_classical: cfg.hot.classical_temperature(last.omega_hot)?,
        t_cold_classical: cfg.cold.classical_temperature(last.omega_cold)?,
        q_hot: last.q_hot,
        w_net: last.w_mech_net,
        collisions_hot: last.collisions_hot,
        collisions_cold: last.collisions_cold,
        cycles: run.cycles.len(),
        limit_cycle: last.limit_cycle,
        status: run.status(),
    })
}

pub fn compute(cfg: &EngineSweepConfig) -> Result<Vec<SweepCell>> {
    let mut points = Vec::new();
    for (i, &h) in cfg.phi_hot_over_pi.iter().enumerate() {
        for (j, &c) in cfg.phi_cold_over_pi.iter().enumerate() {
            points.push((i, j, h * PI, c * PI));
        }
    }
    let pool = worker_pool()?;
    Ok(pool.install(|| {
        points
            .par_iter()
            .map(|&(i, j, phi_hot, phi_cold)| SweepCell {
                i,
                j,
                phi_hot,
                phi_cold,
                outcome: run_cell(&cell_config(&cfg.engine, phi_hot, phi_cold))
                    .map_err(|e| e.to_string()),
            })
            .collect()
    }))
}

impl SweepCell {
    pub fn status_label(&self) -> String {
        match &self.outcome {
            Err(e) => format!("error: {e}"),
            Ok(o) if o.status != RunStatus::Ok => o.status.label().to_string(),
            Ok(o) if o.eta.is_none() => "no-heat-absorbed".to_string(),
            Ok(o) if o.eta_ca_classical.is_none() => "temperature-undefined".to_string(),
            Ok(_) => "ok".to_string(),
        }
    }
}

pub fn table(cells: &[SweepCell]) -> Table {
    let mut t = Table::new(
        "engine_sweep",
        &[
            "i",
            "j",
            "phi_H[rad]",
            "phi_C[rad]",
            "eta[1]",
            "eta_CA[1]",
            "ratio[1]",
            "eta_CA_apparent[1]",
            "eta_otto[1]",
            "T_H_cl[t^-1]",
            "T_C_cl[t^-1]",
            "Q_hot[t^-1]",
            "W_net[t^-1]",
            "collisions_hot",
            "collisions_cold",
            "cycles",
            "limit_cycle",
            "status",
        ],
    )
    .with_reason_column("status");
    for c in cells {
        let mut row: Vec<Cell> = vec![c.i.into(), c.j.into(), c.phi_hot.into(), c.phi_cold.into()];
        match &c.outcome {
            Ok(o) => row.extend([
                o.eta.into(),
                o.eta_ca_classical.into(),
                o.ratio().into(),
                o.eta_ca_apparent.into(),
                o.eta_otto.into(),
                o.t_hot_classical.into(),
                o.t_cold_classical.into(),
                o.q_hot.into(),
                o.w_net.into(),
                o.collisions_hot.into(),
                o.collisions_cold.into(),
                o.cycles.into(),
                if o.limit_cycle { "true" } else { "false" }.into(),
            ]),
            Err(_) => {
                row.extend((0..9).map(|_| Cell::Float(f64::NAN)));
                row.extend([0u64.into(), 0u64.into(), 0u64.into(), "false".into()]);
            }
        }
        row.push(c.status_label().into());
        t.push(row);
    }
    t
}

pub fn run(cfg: &EngineSweepConfig) -> Result<ExperimentOutput> {
    let cells = compute(cfg)?;
    let runs = cells
        .iter()
        .map(|c| {
            let status = match &c.outcome {
                Ok(o) => o.status,
                Err(_) => RunStatus::NonConverged,
            };
            (format!("cell-{}-{}", c.i, c.j), status)
        })
        .collect();
    Ok(ExperimentOutput {
        tables: vec![table(&cells)],
        json: Vec::new(),
        runs,
    })
}
