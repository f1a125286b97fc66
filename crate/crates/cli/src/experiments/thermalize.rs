//! Single-cavity thermalization trajectory from the vacuum.

use anyhow::Result;
use phaseonium::collision::{
    bose_einstein, effective_temperature, gibbs_state, mode_occupation, thermalize_with,
    CollisionChannel, ThermalizationStatus, TRUNCATION_GUARD,
};
use phaseonium::engine::RunStatus;
use phaseonium::operator::{fidelity, fock_space, von_neumann_entropy, DensityMatrix};

use super::ExperimentOutput;
use crate::config::ThermalizeConfig;
use crate::output::{Cell, Table};

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub k: u64,
    pub occupation: f64,
    pub energy: f64,
    pub entropy: f64,
    pub t_eff: f64,
}

#[derive(Clone, Debug)]
pub struct ThermalizeResult {
    pub trajectory: Vec<TrajectoryPoint>,
    /// Temperature the fuel imposes, if positive.
    pub target: Option<f64>,
    pub final_state: DensityMatrix,
    pub collisions: u64,
    pub status: RunStatus,
    pub truncation_tail: f64,
    pub monotone: bool,
}

impl ThermalizeResult {
    pub fn final_point(&self) -> &TrajectoryPoint {
        self.trajectory
            .last()
            .expect("trajectory holds the start point")
    }

    /// Uhlmann fidelity to the truncated Gibbs state at the target temperature.
    pub fn gibbs_fidelity(&self, omega: f64) -> Option<f64> {
        let t = self.target?;
        let g = gibbs_state(self.final_state.dim(), omega, t).ok()?;
        fidelity(&self.final_state, &g).ok()
    }
}

pub fn compute(cfg: &ThermalizeConfig) -> Result<ThermalizeResult> {
    let mut settings = cfg.bath.collisions.clone();
    if let Some(b) = cfg.budget {
        settings.max_collisions = b;
    }
    let fuel = cfg.bath.fuel(cfg.omega)?;
    let target = cfg.bath.temperature(cfg.omega)?;
    let vacuum = DensityMatrix::basis(&fock_space(cfg.levels)?, 0)?;
    let channel = CollisionChannel::single(cfg.levels, fuel.rho(), &settings)?;

    let omega = cfg.omega;
    let mut trajectory = Vec::new();
    let out = thermalize_with(&vacuum, &channel, &settings, |k, rho| {
        let n = mode_occupation(rho, 0).expect("single mode");
        trajectory.push(TrajectoryPoint {
            k,
            occupation: n,
            energy: omega * (n + 0.5),
            entropy: von_neumann_entropy(rho),
            t_eff: effective_temperature(rho, omega).expect("single mode"),
        });
    })?;

    let mut status = match out.status {
        // a run stopped by an explicit budget did what was asked
        ThermalizationStatus::NotConverged if cfg.budget == Some(out.collisions) => RunStatus::Ok,
        s => RunStatus::from_thermalization(s),
    };
    if out.truncation_tail > TRUNCATION_GUARD {
        status = status.max(RunStatus::TaintedTruncation);
    }
    Ok(ThermalizeResult {
        trajectory,
        target,
        collisions: out.collisions,
        status,
        truncation_tail: out.truncation_tail,
        monotone: out.monotone,
        final_state: out.state,
    })
}

pub fn tables(cfg: &ThermalizeConfig, r: &ThermalizeResult) -> Vec<Table> {
    let mut traj = Table::new(
        "thermalize",
        &["k", "n[1]", "E[t^-1]", "S_vN[1]", "T_eff[t^-1]"],
    );
    for p in &r.trajectory {
        traj.push(vec![
            p.k.into(),
            p.occupation.into(),
            p.energy.into(),
            p.entropy.into(),
            p.t_eff.into(),
        ]);
    }

    let mut summary = Table::new(
        "thermalize_summary",
        &[
            "T_target[t^-1]",
            "T_eff[t^-1]",
            "rel_error[1]",
            "n_final[1]",
            "n_bose_einstein[1]",
            "fidelity[1]",
            "collisions",
            "truncation_tail[1]",
            "monotone",
            "status",
            "reason",
        ],
    )
    .with_reason_column("reason");
    let last = r.final_point();
    let target = r.target.unwrap_or(f64::NAN);
    let reason = if r.target.is_none() {
        "target-temperature-undefined"
    } else {
        ""
    };
    summary.push(vec![
        target.into(),
        last.t_eff.into(),
        ((last.t_eff - target) / target).abs().into(),
        last.occupation.into(),
        r.target.map(|t| bose_einstein(cfg.omega, t)).into(),
        r.gibbs_fidelity(cfg.omega).into(),
        r.collisions.into(),
        r.truncation_tail.into(),
        if r.monotone { "true" } else { "false" }.into(),
        r.status.label().into(),
        Cell::Text(reason.into()),
    ]);
    vec![traj, summary]
}

pub fn run(cfg: &ThermalizeConfig) -> Result<ExperimentOutput> {
    let r = compute(cfg)?;
    Ok(ExperimentOutput {
        tables: tables(cfg, &r),
        json: Vec::new(),
        runs: vec![("thermalize".into(), r.status)],
    })
}
