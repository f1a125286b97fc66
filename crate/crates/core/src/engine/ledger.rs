use serde::{Deserialize, Serialize};

use crate::collision::ThermalizationStatus;

/// Relative energy mismatch over one cycle below which it counts as a limit cycle.
pub const LIMIT_CYCLE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrokeKind {
    HotIsochore,
    Expansion,
    ColdIsochore,
    Compression,
}

impl StrokeKind {
    pub fn is_isochore(self) -> bool {
        matches!(self, StrokeKind::HotIsochore | StrokeKind::ColdIsochore)
    }

    pub fn label(self) -> &'static str {
        match self {
            StrokeKind::HotIsochore => "hot-isochore",
            StrokeKind::Expansion => "expansion",
            StrokeKind::ColdIsochore => "cold-isochore",
            StrokeKind::Compression => "compression",
        }
    }
}

/// Worst outcome seen so far, ordered by severity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    #[default]
    Ok,
    NonConverged,
    Trapped,
    TaintedTruncation,
}

impl RunStatus {
    pub fn label(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::NonConverged => "non-converged",
            RunStatus::Trapped => "trapped",
            RunStatus::TaintedTruncation => "tainted-truncation",
        }
    }

    pub fn from_thermalization(status: ThermalizationStatus) -> Self {
        match status {
            ThermalizationStatus::Converged => RunStatus::Ok,
            ThermalizationStatus::NotConverged => RunStatus::NonConverged,
            ThermalizationStatus::Trapped => RunStatus::Trapped,
        }
    }
}

/// Snapshot after one collision (isochore) or one mirror step (adiabat).
/// Per-cavity vectors are indexed by cavity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub length: f64,
    pub omega: f64,
    /// Time-averaged pressure per cavity.
    pub pressures: Vec<f64>,
    /// ω(⟨n⟩ + ½) per cavity.
    pub energies: Vec<f64>,
    pub occupations: Vec<f64>,
    /// Reduced von Neumann entropy per cavity.
    pub entropies: Vec<f64>,
    /// Entropy of the joint field state.
    pub entropy: f64,
    pub mutual_info: f64,
    /// Collisions since the start of the stroke.
    pub collisions: u64,
}

impl StepRecord {
    pub fn energy(&self) -> f64 {
        self.energies.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrokeLedger {
    pub kind: StrokeKind,
    /// Includes the starting point; empty when steps are not recorded.
    pub steps: Vec<StepRecord>,
    pub q_al: f64,
    pub w_al: f64,
    pub w_mech: f64,
    pub energy_start: f64,
    pub energy_end: f64,
    pub entropy_start: f64,
    pub entropy_end: f64,
    pub mutual_info_start: f64,
    pub mutual_info_end: f64,
    pub length_start: f64,
    pub length_end: f64,
    pub collisions: u64,
    /// Largest top-two-level population over the cavities at the end.
    pub truncation_tail: f64,
    pub status: RunStatus,
}

impl StrokeLedger {
    pub fn delta_energy(&self) -> f64 {
        self.energy_end - self.energy_start
    }

    /// |ΔE − Q − W|.
    pub fn first_law_residual(&self) -> f64 {
        (self.delta_energy() - self.q_al - self.w_al).abs()
    }

    pub fn max_mutual_info(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.mutual_info)
            .fold(self.mutual_info_start.max(self.mutual_info_end), f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub index: usize,
    pub strokes: Vec<StrokeLedger>,
    /// Mechanical work done by the field over the cycle (compression counts negative).
    pub w_mech_net: f64,
    /// Alicki work on the field over the cycle; negative for an engine.
    pub w_al_net: f64,
    pub q_hot: f64,
    pub q_cold: f64,
    /// W_mech,net / Q_hot, absent when no heat was absorbed.
    pub eta: Option<f64>,
    /// 1 − √(T_C/T_H) with the temperatures the fuels impose.
    pub eta_ca: Option<f64>,
    /// Same with the classical temperatures of the same ancillas.
    pub eta_ca_classical: Option<f64>,
    /// 1 − ω_expanded/ω_compressed.
    pub eta_otto_ideal: f64,
    pub omega_hot: f64,
    pub omega_cold: f64,
    pub temperature_hot: Option<f64>,
    pub temperature_cold: Option<f64>,
    pub energy_start: f64,
    pub energy_end: f64,
    pub limit_cycle: bool,
    pub collisions_hot: u64,
    pub collisions_cold: u64,
    pub status: RunStatus,
}

impl CycleRecord {
    pub fn stroke(&self, kind: StrokeKind) -> &StrokeLedger {
        self.strokes
            .iter()
            .find(|s| s.kind == kind)
            .expect("every cycle has all four strokes")
    }

    /// Mechanical work over the Alicki work extracted from the field.
    pub fn work_ratio(&self) -> Option<f64> {
        (self.w_al_net != 0.0).then(|| self.w_mech_net / -self.w_al_net)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrokeAudit {
    pub kind: StrokeKind,
    pub q_al: f64,
    pub w_al: f64,
    pub w_mech: f64,
    pub delta_energy: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub strokes: Vec<StrokeAudit>,
    pub q_net: f64,
    pub w_al_net: f64,
    pub w_mech_net: f64,
    pub delta_energy: f64,
    /// |ΔE_cycle − Q_net − W_al,net|.
    pub residual: f64,
    /// Largest magnitude among the ledger entries, used to scale `residual`.
    pub scale: f64,
    pub closed: bool,
    /// W_mech,net / (−W_al,net).
    pub ratio_wm_wal: Option<f64>,
}

/// Per-stroke and net energy bookkeeping of a finished cycle.
pub fn work_heat_audit(record: &CycleRecord) -> AuditReport {
    let strokes: Vec<StrokeAudit> = record
        .strokes
        .iter()
        .map(|s| StrokeAudit {
            kind: s.kind,
            q_al: s.q_al,
            w_al: s.w_al,
            w_mech: s.w_mech,
            delta_energy: s.delta_energy(),
            residual: s.first_law_residual(),
        })
        .collect();
    let q_net: f64 = strokes.iter().map(|s| s.q_al).sum();
    let w_al_net: f64 = strokes.iter().map(|s| s.w_al).sum();
    let w_mech_net: f64 = strokes.iter().map(|s| s.w_mech).sum();
    let delta_energy = record.energy_end - record.energy_start;
    let residual = (delta_energy - q_net - w_al_net).abs();
    let scale = strokes
        .iter()
        .flat_map(|s| [s.q_al.abs(), s.w_al.abs(), s.w_mech.abs()])
        .fold(0.0, f64::max);
    AuditReport {
        strokes,
        q_net,
        w_al_net,
        w_mech_net,
        delta_energy,
        residual,
        scale,
        closed: residual <= 1e-8 * scale.max(f64::MIN_POSITIVE),
        ratio_wm_wal: (w_al_net != 0.0).then(|| w_mech_net / -w_al_net),
    }
}
