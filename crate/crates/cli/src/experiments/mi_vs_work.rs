//! Cascade cycles at decreasing isochore budgets: correlations against work.

use anyhow::{bail, Result};
use phaseonium::engine::{run_engine, IsochoreBudget, RunStatus, StrokeKind};
use rayon::prelude::*;

use super::{strictly_decreasing, strictly_increasing, worker_pool, ExperimentOutput};
use crate::config::MiVsWorkConfig;
use crate::output::{Cell, Table};

#[derive(Clone, Debug)]
pub struct BudgetPoint {
    pub budget: IsochoreBudget,
    /// Largest mutual information seen during expansion.
    pub mutual_info: f64,
    pub w_mech: f64,
    /// Work extracted in the energy-flow picture, −ΣW_al.
    pub w_al: f64,
    pub q_hot: f64,
    pub eta: Option<f64>,
    pub eta_otto: f64,
    pub cycles: usize,
    pub limit_cycle: bool,
    pub status: RunStatus,
}

impl BudgetPoint {
    pub fn ratio(&self) -> Option<f64> {
        (self.w_al != 0.0).then(|| self.w_mech / self.w_al)
    }
}

pub fn budget_label(b: IsochoreBudget) -> String {
    match b {
        IsochoreBudget::Full => "full".to_string(),
        IsochoreBudget::Collisions(n) => n.to_string(),
    }
}

pub fn compute(cfg: &MiVsWorkConfig) -> Result<Vec<BudgetPoint>> {
    if cfg.budgets.is_empty() {
        bail!("mi-vs-work needs at least one budget");
    }
    let pool = worker_pool()?;
    pool.install(|| {
        cfg.budgets
            .par_iter()
            .map(|&budget| -> Result<BudgetPoint> {
                let mut engine = cfg.engine.clone();
                engine.hot_budget = budget;
                engine.cold_budget = budget;
                let run = run_engine(&engine)?;
                let last = run.last();
                Ok(BudgetPoint {
                    budget,
                    mutual_info: last.stroke(StrokeKind::Expansion).max_mutual_info(),
                    w_mech: last.w_mech_net,
                    w_al: -last.w_al_net,
                    q_hot: last.q_hot,
                    eta: last.eta,
                    eta_otto: last.eta_otto_ideal,
                    cycles: run.cycles.len(),
                    limit_cycle: last.limit_cycle,
                    status: run.status(),
                })
            })
            .collect()
    })
}

/// Named checks over the budget series, in configured budget order.
pub fn diagnostics(points: &[BudgetPoint]) -> Vec<(&'static str, f64, bool)> {
    let col = |f: fn(&BudgetPoint) -> f64| points.iter().map(f).collect::<Vec<_>>();
    let mi = col(|p| p.mutual_info);
    let ratio = col(|p| p.ratio().unwrap_or(f64::NAN));
    let q = col(|p| p.q_hot);
    let w = col(|p| p.w_mech);
    let etas: Vec<f64> = points.iter().filter_map(|p| p.eta).collect();
    let spread = match (
        etas.iter().cloned().reduce(f64::max),
        etas.iter().cloned().reduce(f64::min),
    ) {
        (Some(hi), Some(lo)) if hi != 0.0 => (hi - lo) / hi.abs(),
        _ => f64::NAN,
    };
    let mi_span = mi.last().copied().unwrap_or(f64::NAN) - mi[0];
    let ratio_span = ratio.last().copied().unwrap_or(f64::NAN) - ratio[0];
    vec![
        ("mi_increasing", mi_span, strictly_increasing(&mi)),
        ("ratio_increasing", ratio_span, strictly_increasing(&ratio)),
        (
            "q_hot_decreasing",
            q[q.len() - 1] - q[0],
            strictly_decreasing(&q),
        ),
        (
            "w_net_decreasing",
            w[w.len() - 1] - w[0],
            strictly_decreasing(&w),
        ),
        ("eta_relative_spread", spread, spread <= 1e-9),
    ]
}

pub fn tables(points: &[BudgetPoint]) -> Vec<Table> {
    let mut t = Table::new(
        "mi_vs_work",
        &[
            "budget",
            "MI[1]",
            "W_mech[t^-1]",
            "W_al[t^-1]",
            "Q_hot[t^-1]",
            "ratio_Wm_Wal[1]",
            "eta[1]",
            "eta_otto[1]",
            "cycles",
            "limit_cycle",
            "status",
        ],
    )
    .with_reason_column("status");
    for p in points {
        let status = match (p.status, p.eta) {
            (RunStatus::Ok, None) => "no-heat-absorbed",
            (s, _) => s.label(),
        };
        t.push(vec![
            budget_label(p.budget).into(),
            p.mutual_info.into(),
            p.w_mech.into(),
            p.w_al.into(),
            p.q_hot.into(),
            p.ratio().into(),
            p.eta.into(),
            p.eta_otto.into(),
            p.cycles.into(),
            if p.limit_cycle { "true" } else { "false" }.into(),
            status.into(),
        ]);
    }
    let mut d = Table::new(
        "mi_vs_work_diagnostics",
        &["check", "value[1]", "pass", "reason"],
    )
    .with_reason_column("reason");
    for (name, value, pass) in diagnostics(points) {
        let reason = if value.is_nan() { "undefined" } else { "" };
        d.push(vec![
            name.into(),
            value.into(),
            if pass { "true" } else { "false" }.into(),
            Cell::from(reason),
        ]);
    }
    vec![t, d]
}

pub fn run(cfg: &MiVsWorkConfig) -> Result<ExperimentOutput> {
    let points = compute(cfg)?;
    let runs = points
        .iter()
        .map(|p| (format!("budget-{}", budget_label(p.budget)), p.status))
        .collect();
    Ok(ExperimentOutput {
        tables: tables(&points),
        json: Vec::new(),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(budget_label(IsochoreBudget::Full), "full");
        assert_eq!(budget_label(IsochoreBudget::Collisions(7)), "7");
    }

    #[test]
    fn short_series_runs() {
        let mut cfg = MiVsWorkConfig::default();
        cfg.engine.cycles = 2;
        cfg.engine.steps_per_adiabat = 5;
        cfg.budgets = vec![IsochoreBudget::Collisions(6), IsochoreBudget::Collisions(3)];
        let points = compute(&cfg).unwrap();
        assert_eq!(points.len(), 2);
        assert!(points
            .iter()
            .all(|p| (p.ratio().unwrap() - 1.0).abs() < 1e-6));
        let t = tables(&points);
        assert!(t.iter().all(|t| t.validate().is_ok()));
    }

    #[test]
    fn empty_budget_list_is_an_error() {
        let cfg = MiVsWorkConfig {
            budgets: Vec::new(),
            ..Default::default()
        };
        assert!(compute(&cfg).is_err());
    }
}
