//! Two-cavity cascade cycle: step-by-step trajectory of the reported cycle
//! and per-cavity loop summaries.

use anyhow::{bail, Result};
use phaseonium::engine::{run_engine, CycleRecord, EngineRun, StrokeKind};

use super::ExperimentOutput;
use crate::config::CascadeCycleConfig;
use crate::output::{Cell, Table};

/// Per-cavity summary of the reported cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct CavityLoop {
    pub energy_hot: f64,
    pub energy_cold: f64,
    /// Signed shoelace area enclosed in the (ω, E) plane.
    pub area: f64,
}

/// Shoelace area of the closed polygon through `points`.
pub fn shoelace(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|k| {
            let (x0, y0) = points[k];
            let (x1, y1) = points[(k + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum::<f64>()
        / 2.0
}

pub fn cavity_loops(record: &CycleRecord) -> Vec<CavityLoop> {
    let cavities = record.strokes[0]
        .steps
        .last()
        .map_or(0, |s| s.energies.len());
    let end_energy = |kind: StrokeKind, i: usize| {
        record
            .stroke(kind)
            .steps
            .last()
            .map_or(f64::NAN, |s| s.energies[i])
    };
    (0..cavities)
        .map(|i| {
            let points: Vec<(f64, f64)> = record
                .strokes
                .iter()
                .flat_map(|s| s.steps.iter().map(move |p| (p.omega, p.energies[i])))
                .collect();
            CavityLoop {
                energy_hot: end_energy(StrokeKind::HotIsochore, i),
                energy_cold: end_energy(StrokeKind::ColdIsochore, i),
                area: shoelace(&points),
            }
        })
        .collect()
}

pub fn compute(cfg: &CascadeCycleConfig) -> Result<EngineRun> {
    if cfg.engine.cavities < 2 {
        bail!("cascade-cycle needs at least two cavities");
    }
    if !cfg.engine.record_steps {
        bail!("cascade-cycle needs engine.record_steps = true");
    }
    Ok(run_engine(&cfg.engine)?)
}

pub fn tables(run: &EngineRun) -> Vec<Table> {
    let record = run.last();
    let n = record.strokes[0]
        .steps
        .last()
        .map_or(0, |s| s.energies.len());
    let mut header = vec![
        "t[t]".to_string(),
        "stroke".to_string(),
        "L[t]".to_string(),
        "omega[t^-1]".to_string(),
    ];
    for prefix in ["E", "p", "S"] {
        let unit = match prefix {
            "E" => "t^-1",
            "p" => "t^-4",
            _ => "1",
        };
        header.extend((1..=n).map(|i| format!("{prefix}{i}[{unit}]")));
    }
    header.push("MI[1]".to_string());
    header.push("collisions".to_string());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut series = Table::new("cascade_cycle", &header_refs);
    for stroke in &record.strokes {
        for p in &stroke.steps {
            let mut row: Vec<Cell> = vec![
                p.time.into(),
                stroke.kind.label().into(),
                p.length.into(),
                p.omega.into(),
            ];
            row.extend(p.energies.iter().map(|&x| Cell::from(x)));
            row.extend(p.pressures.iter().map(|&x| Cell::from(x)));
            row.extend(p.entropies.iter().map(|&x| Cell::from(x)));
            row.push(p.mutual_info.into());
            row.push(p.collisions.into());
            series.push(row);
        }
    }

    let expansion = record.stroke(StrokeKind::Expansion);
    let mi: Vec<f64> = expansion.steps.iter().map(|s| s.mutual_info).collect();
    let mi_mean = if mi.is_empty() {
        f64::NAN
    } else {
        mi.iter().sum::<f64>() / mi.len() as f64
    };
    let mut summary = Table::new(
        "cascade_summary",
        &[
            "cavity",
            "E_hot_end[t^-1]",
            "E_cold_end[t^-1]",
            "loop_area[t^-2]",
            "MI_max_expansion[1]",
            "MI_mean_expansion[1]",
            "cycles",
            "limit_cycle",
            "status",
        ],
    )
    .with_reason_column("status");
    for (i, l) in cavity_loops(record).iter().enumerate() {
        summary.push(vec![
            (i + 1).into(),
            l.energy_hot.into(),
            l.energy_cold.into(),
            l.area.into(),
            expansion.max_mutual_info().into(),
            mi_mean.into(),
            run.cycles.len().into(),
            if record.limit_cycle { "true" } else { "false" }.into(),
            run.status().label().into(),
        ]);
    }
    vec![series, summary]
}

pub fn run(cfg: &CascadeCycleConfig) -> Result<ExperimentOutput> {
    let run = compute(cfg)?;
    Ok(ExperimentOutput {
        tables: tables(&run),
        json: vec![(
            "cycle_record.json".to_string(),
            serde_json::to_value(run.last())?,
        )],
        runs: vec![("cascade".into(), run.status())],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use phaseonium::engine::IsochoreBudget;

    #[test]
    fn shoelace_unit_square() {
        let sq = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        assert!((shoelace(&sq) - 1.0).abs() < 1e-15);
        let rev: Vec<_> = sq.iter().rev().copied().collect();
        assert!((shoelace(&rev) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn short_cascade_produces_tables() {
        let mut cfg = CascadeCycleConfig::default();
        cfg.engine.cycles = 2;
        cfg.engine.steps_per_adiabat = 5;
        cfg.engine.hot_budget = IsochoreBudget::Collisions(3);
        cfg.engine.cold_budget = IsochoreBudget::Collisions(3);
        let out = run(&cfg).unwrap();
        let series = out.table("cascade_cycle").unwrap();
        assert!(series.column("E2").is_some());
        assert!(series.validate().is_ok());
        assert_eq!(out.table("cascade_summary").unwrap().rows.len(), 2);
    }

    #[test]
    fn single_cavity_is_rejected() {
        let mut cfg = CascadeCycleConfig::default();
        cfg.engine.cavities = 1;
        assert!(compute(&cfg).is_err());
    }
}
