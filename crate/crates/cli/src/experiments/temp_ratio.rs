//! T_φ/T_cl over an (α, φ) grid, analytic and, optionally, from simulated
//! steady states.

use std::f64::consts::TAU;

use anyhow::{bail, Result};
use phaseonium::bath::{
    apparent_alpha_bound, apparent_temperature, build_phaseonium, classical_alpha_bound,
    classical_temperature, one_minus_sin, BathTemperature, PhaseoniumParams,
};
use phaseonium::collision::{effective_temperature, thermalize, TRUNCATION_GUARD};
use phaseonium::engine::RunStatus;
use phaseonium::operator::{fock_space, DensityMatrix};
use rayon::prelude::*;

use super::{linspace, worker_pool, ExperimentOutput};
use crate::config::{GridKind, TempRatioConfig};
use crate::output::{Cell, Table};

#[derive(Clone, Debug)]
pub struct SimulatedRatio {
    pub t_phi: f64,
    pub t_cl: f64,
    pub status: RunStatus,
}

impl SimulatedRatio {
    pub fn ratio(&self) -> f64 {
        self.t_phi / self.t_cl
    }
}

#[derive(Clone, Debug)]
pub struct RatioCell {
    pub i: usize,
    pub j: usize,
    pub alpha: f64,
    pub phi: f64,
    pub t_phi: BathTemperature,
    pub t_cl: BathTemperature,
    pub simulated: Option<std::result::Result<SimulatedRatio, String>>,
}

impl RatioCell {
    pub fn valid(&self) -> bool {
        self.t_phi.positive().is_some() && self.t_cl.positive().is_some()
    }

    pub fn ratio(&self) -> Option<f64> {
        Some(self.t_phi.positive()? / self.t_cl.positive()?)
    }
}

/// (i, j, α, φ) points of the configured grid; i indexes α, j indexes φ.
pub fn grid(cfg: &TempRatioConfig) -> Result<Vec<(usize, usize, f64, f64)>> {
    if cfg.alpha_points == 0 || cfg.phi_points == 0 {
        bail!("temp-ratio grid is empty");
    }
    let mut points = Vec::new();
    match cfg.grid {
        GridKind::Uniform => {
            let alphas = linspace(cfg.alpha_min, cfg.alpha_max, cfg.alpha_points);
            let phis = linspace(0.0, TAU, cfg.phi_points);
            for (j, &phi) in phis.iter().enumerate() {
                for (i, &alpha) in alphas.iter().enumerate() {
                    points.push((i, j, alpha, phi));
                }
            }
        }
        GridKind::Valid => {
            let fractions = linspace(cfg.fraction_min, cfg.fraction_max, cfg.alpha_points);
            let phis = (0..=cfg.phi_points)
                .map(|k| TAU * k as f64 / cfg.phi_points as f64)
                .filter(|&phi| one_minus_sin(phi) > 1e-12);
            for (j, phi) in phis.enumerate() {
                let bound = apparent_alpha_bound(phi).min(classical_alpha_bound());
                for (i, &f) in fractions.iter().enumerate() {
                    points.push((i, j, f * bound, phi));
                }
            }
        }
    }
    Ok(points)
}

fn simulate(
    cfg: &TempRatioConfig,
    params: &PhaseoniumParams,
) -> phaseonium::Result<SimulatedRatio> {
    let fuel = build_phaseonium(params)?;
    let vacuum = DensityMatrix::basis(&fock_space(cfg.levels)?, 0)?;
    let mut status = RunStatus::Ok;
    let mut steady = |ancilla: &DensityMatrix| -> phaseonium::Result<f64> {
        let out = thermalize(&vacuum, ancilla, &cfg.collisions)?;
        status = status.max(RunStatus::from_thermalization(out.status));
        if out.truncation_tail > TRUNCATION_GUARD {
            status = status.max(RunStatus::TaintedTruncation);
        }
        effective_temperature(&out.state, cfg.omega)
    };
    let t_phi = steady(fuel.rho())?;
    let t_cl = steady(fuel.dephased().rho())?;
    Ok(SimulatedRatio {
        t_phi,
        t_cl,
        status,
    })
}

pub fn compute(cfg: &TempRatioConfig) -> Result<Vec<RatioCell>> {
    let points = grid(cfg)?;
    let pool = worker_pool()?;
    let cells = pool.install(|| {
        points
            .par_iter()
            .map(|&(i, j, alpha, phi)| -> Result<RatioCell> {
                let params = PhaseoniumParams::new(alpha, phi, cfg.omega)?;
                let t_phi = apparent_temperature(&params)?;
                let t_cl = classical_temperature(&params)?;
                let mut cell = RatioCell {
                    i,
                    j,
                    alpha,
                    phi,
                    t_phi,
                    t_cl,
                    simulated: None,
                };
                if cfg.simulate && cell.valid() {
                    cell.simulated = Some(simulate(cfg, &params).map_err(|e| e.to_string()));
                }
                Ok(cell)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(cells)
}

fn temperature_cell(t: BathTemperature) -> Cell {
    t.positive().into()
}

pub fn tables(cfg: &TempRatioConfig, cells: &[RatioCell]) -> Vec<Table> {
    let mut map = Table::new(
        "temp_ratio",
        &[
            "i",
            "j",
            "alpha[1]",
            "phi[rad]",
            "T_phi[t^-1]",
            "T_cl[t^-1]",
            "ratio[1]",
            "domain_flag",
            "reason",
            "detail",
        ],
    )
    .with_reason_column("reason");
    for c in cells {
        let (flag, reason) = if c.valid() { (1u64, "") } else { (0, "domain") };
        let detail = format!(
            "apparent={};classical={}",
            c.t_phi.reason(),
            c.t_cl.reason()
        );
        map.push(vec![
            c.i.into(),
            c.j.into(),
            c.alpha.into(),
            c.phi.into(),
            temperature_cell(c.t_phi),
            temperature_cell(c.t_cl),
            c.ratio().into(),
            flag.into(),
            reason.into(),
            detail.into(),
        ]);
    }

    let mut boundary = Table::new(
        "temp_ratio_boundary",
        &["phi[rad]", "alpha_apparent[1]", "alpha_classical[1]"],
    );
    for phi in linspace(0.0, TAU, cfg.boundary_points) {
        boundary.push(vec![
            phi.into(),
            apparent_alpha_bound(phi).into(),
            classical_alpha_bound().into(),
        ]);
    }

    let mut tables = vec![map, boundary];
    if cfg.simulate {
        let mut sim = Table::new(
            "temp_ratio_sim",
            &[
                "i",
                "j",
                "alpha[1]",
                "phi[rad]",
                "T_phi_sim[t^-1]",
                "T_cl_sim[t^-1]",
                "ratio_sim[1]",
                "ratio[1]",
                "rel_error[1]",
                "status",
            ],
        )
        .with_reason_column("status");
        for c in cells {
            let Some(result) = &c.simulated else { continue };
            let analytic = c.ratio().unwrap_or(f64::NAN);
            let row_tail: Vec<Cell> = match result {
                Ok(s) => vec![
                    s.t_phi.into(),
                    s.t_cl.into(),
                    s.ratio().into(),
                    analytic.into(),
                    ((s.ratio() - analytic) / analytic).abs().into(),
                    s.status.label().into(),
                ],
                Err(e) => vec![
                    f64::NAN.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    analytic.into(),
                    f64::NAN.into(),
                    format!("error: {e}").into(),
                ],
            };
            let mut row: Vec<Cell> = vec![c.i.into(), c.j.into(), c.alpha.into(), c.phi.into()];
            row.extend(row_tail);
            sim.push(row);
        }
        tables.push(sim);
    }
    tables
}

pub fn run(cfg: &TempRatioConfig) -> Result<ExperimentOutput> {
    let cells = compute(cfg)?;
    let runs = cells
        .iter()
        .filter_map(|c| {
            let status = match c.simulated.as_ref()? {
                Ok(s) => s.status,
                Err(_) => RunStatus::NonConverged,
            };
            Some((format!("cell-{}-{}", c.i, c.j), status))
        })
        .collect();
    Ok(ExperimentOutput {
        tables: tables(cfg, &cells),
        json: Vec::new(),
        runs,
    })
}
