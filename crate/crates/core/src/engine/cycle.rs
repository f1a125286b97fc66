use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::cavity::{mean_pressure, CavityConfig};
use super::ledger::{
    CycleRecord, RunStatus, StepRecord, StrokeKind, StrokeLedger, LIMIT_CYCLE_TOL,
};
use super::{BathConfig, EngineConfig, InitialState, IsochoreBudget, StrokeMode};
use crate::collision::{
    check_resonance, gibbs_state, mode_occupation, thermalize_with, truncation_tail,
    CollisionChannel, CollisionKernel, CollisionSettings, WindowDetector, TRUNCATION_GUARD,
};
use crate::error::{Error, Result};
use crate::operator::{partial_trace, von_neumann_entropy, DensityMatrix};

/// Relative tolerance of the force-balance bisection.
const FORCE_BALANCE_TOL: f64 = 1e-9;

/// Field state plus the (synchronized) cavity geometry.
#[derive(Clone, Debug)]
pub struct EngineState {
    pub cavities: Vec<CavityConfig>,
    pub rho: DensityMatrix,
    pub time: f64,
}

impl EngineState {
    pub fn new(cavities: Vec<CavityConfig>, rho: DensityMatrix) -> Result<Self> {
        let dims: Vec<usize> = cavities.iter().map(|c| c.levels).collect();
        if rho.space().dims() != dims.as_slice() {
            return Err(Error::InvalidSpace(format!(
                "state dims {:?} do not match cavities {:?}",
                rho.space().dims(),
                dims
            )));
        }
        Ok(Self {
            cavities,
            rho,
            time: 0.0,
        })
    }

    pub fn initial(config: &EngineConfig) -> Result<Self> {
        let cav = &config.cavity;
        let single = match config.initial {
            InitialState::Vacuum => DensityMatrix::basis(&cav.space(), 0)?,
            InitialState::Thermal { temperature } => {
                gibbs_state(cav.levels, cav.omega(), temperature)?
            }
        };
        let copies: Vec<&DensityMatrix> = (0..config.cavities).map(|_| &single).collect();
        let rho = if copies.len() == 1 {
            single.clone()
        } else {
            DensityMatrix::tensor(&copies)?
        };
        Self::new(vec![cav.clone(); config.cavities], rho)
    }

    pub fn length(&self) -> f64 {
        self.cavities[0].length
    }

    pub fn omega(&self) -> f64 {
        self.cavities[0].omega()
    }

    pub fn occupations(&self) -> Vec<f64> {
        occupations(&self.rho)
    }

    /// Σ ω_i(⟨n_i⟩ + ½).
    pub fn energy(&self) -> f64 {
        energies(&self.cavities, &self.occupations()).iter().sum()
    }

    pub fn snapshot(&self, collisions: u64) -> StepRecord {
        snapshot(&self.cavities, &self.rho, self.time, collisions)
    }
}

fn occupations(rho: &DensityMatrix) -> Vec<f64> {
    (0..rho.space().subsystems())
        .map(|i| mode_occupation(rho, i).expect("subsystem index in range"))
        .collect()
}

fn energies(cavities: &[CavityConfig], occupations: &[f64]) -> Vec<f64> {
    cavities
        .iter()
        .zip(occupations)
        .map(|(c, n)| c.omega() * (n + 0.5))
        .collect()
}

fn snapshot(
    cavities: &[CavityConfig],
    rho: &DensityMatrix,
    time: f64,
    collisions: u64,
) -> StepRecord {
    let occupations = occupations(rho);
    let entropy = von_neumann_entropy(rho);
    let entropies: Vec<f64> = if cavities.len() == 1 {
        vec![entropy]
    } else {
        (0..cavities.len())
            .map(|i| von_neumann_entropy(&partial_trace(rho, &[i]).expect("valid subsystem")))
            .collect()
    };
    let mutual_info = if cavities.len() == 1 {
        0.0
    } else {
        (entropies.iter().sum::<f64>() - entropy).max(0.0)
    };
    moved_snapshot(
        cavities,
        occupations,
        entropies,
        entropy,
        mutual_info,
        time,
        collisions,
    )
}

fn moved_snapshot(
    cavities: &[CavityConfig],
    occupations: Vec<f64>,
    entropies: Vec<f64>,
    entropy: f64,
    mutual_info: f64,
    time: f64,
    collisions: u64,
) -> StepRecord {
    StepRecord {
        time,
        length: cavities[0].length,
        omega: cavities[0].omega(),
        pressures: cavities
            .iter()
            .zip(&occupations)
            .map(|(c, &n)| mean_pressure(c, n))
            .collect(),
        energies: energies(cavities, &occupations),
        occupations,
        entropies,
        entropy,
        mutual_info,
        collisions,
    }
}

fn max_tail(rho: &DensityMatrix) -> f64 {
    (0..rho.space().subsystems())
        .map(|i| truncation_tail(rho, i).expect("subsystem index in range"))
        .fold(0.0, f64::max)
}

/// Collision kernels keyed by truncation and collision settings.
#[derive(Default)]
struct KernelCache {
    entries: Vec<(usize, f64, f64, CollisionKernel)>,
}

impl KernelCache {
    fn get(&mut self, levels: usize, settings: &CollisionSettings) -> Result<&CollisionKernel> {
        let pos = self.entries.iter().position(|(n, c, d, _)| {
            *n == levels && *c == settings.coupling && *d == settings.duration
        });
        let pos = match pos {
            Some(p) => p,
            None => {
                let k = CollisionKernel::new(levels, settings)?;
                self.entries
                    .push((levels, settings.coupling, settings.duration, k));
                self.entries.len() - 1
            }
        };
        Ok(&self.entries[pos].3)
    }
}

/// Brings the cavities into contact with a phaseonium beam at fixed length.
pub fn run_isochore(
    state: EngineState,
    bath: &BathConfig,
    budget: IsochoreBudget,
    kind: StrokeKind,
    record_steps: bool,
) -> Result<(EngineState, StrokeLedger)> {
    isochore(
        state,
        bath,
        budget,
        kind,
        record_steps,
        &mut KernelCache::default(),
    )
}

fn isochore(
    mut state: EngineState,
    bath: &BathConfig,
    budget: IsochoreBudget,
    kind: StrokeKind,
    record_steps: bool,
    kernels: &mut KernelCache,
) -> Result<(EngineState, StrokeLedger)> {
    let omegas: Vec<f64> = state.cavities.iter().map(CavityConfig::omega).collect();
    check_resonance(&omegas)?;
    let settings = &bath.collisions;
    settings.validate()?;
    let fuel = bath.fuel(state.omega())?;
    let levels = state.cavities[0].levels;
    if state.cavities.iter().any(|c| c.levels != levels) {
        return Err(Error::InvalidSpace(
            "cascaded cavities need equal truncation".into(),
        ));
    }
    let kernel = kernels.get(levels, settings)?;
    let n_cav = state.cavities.len();

    let start = state.snapshot(0);
    let t0 = state.time;
    let mut steps = Vec::new();
    let mut q = 0.0;
    let mut prev_energy = start.energy();
    let cavities = state.cavities.clone();
    let mut record = |k: u64, rho: &DensityMatrix| {
        let e: f64 = energies(&cavities, &occupations(rho)).iter().sum();
        q += e - prev_energy;
        prev_energy = e;
        if record_steps {
            steps.push(snapshot(
                &cavities,
                rho,
                t0 + k as f64 * settings.duration,
                k,
            ));
        }
    };

    let single = CollisionChannel::from_kernels(&[kernel], fuel.rho(), &[true])?;
    let trapped = single.has_trapping_link();
    let (rho, collisions, mut status) = match (budget, n_cav) {
        (IsochoreBudget::Full, 1) => {
            let out = thermalize_with(&state.rho, &single, settings, &mut record)?;
            (
                out.state,
                out.collisions,
                RunStatus::from_thermalization(out.status),
            )
        }
        (IsochoreBudget::Full, _) => {
            record(0, &state.rho);
            let mut rho = state.rho.clone();
            let mut active = vec![true; n_cav];
            let mut detectors: Vec<WindowDetector> = (0..n_cav)
                .map(|_| WindowDetector::new(settings.window, settings.convergence_tol))
                .collect();
            for (d, n) in detectors.iter_mut().zip(occupations(&rho)) {
                d.push(n);
            }
            let mut channels: HashMap<Vec<bool>, CollisionChannel> = HashMap::new();
            let mut k = 0;
            while k < settings.max_collisions && active.iter().any(|&a| a) {
                if !channels.contains_key(&active) {
                    let ks: Vec<&CollisionKernel> = (0..n_cav).map(|_| kernel).collect();
                    channels.insert(
                        active.clone(),
                        CollisionChannel::from_kernels(&ks, fuel.rho(), &active)?,
                    );
                }
                rho = channels[&active].apply(&rho)?;
                k += 1;
                record(k, &rho);
                let ns = occupations(&rho);
                for i in 0..n_cav {
                    let settled = detectors[i].push(ns[i]);
                    // a cavity decouples once it and every cavity upstream have settled
                    if settled && active[i] && active[..i].iter().all(|a| !a) {
                        active[i] = false;
                    }
                }
            }
            let status = if trapped {
                RunStatus::Trapped
            } else if active.iter().any(|&a| a) {
                RunStatus::NonConverged
            } else {
                RunStatus::Ok
            };
            (rho, k, status)
        }
        (IsochoreBudget::Collisions(n), _) => {
            record(0, &state.rho);
            let ks: Vec<&CollisionKernel> = (0..n_cav).map(|_| kernel).collect();
            let channel = CollisionChannel::from_kernels(&ks, fuel.rho(), &vec![true; n_cav])?;
            let mut rho = state.rho.clone();
            for k in 1..=n {
                rho = channel.apply(&rho)?;
                record(k, &rho);
            }
            (rho, n, RunStatus::Ok)
        }
    };

    let truncation = max_tail(&rho);
    if truncation > TRUNCATION_GUARD {
        status = status.max(RunStatus::TaintedTruncation);
    }
    state.rho = rho;
    state.time = t0 + collisions as f64 * settings.duration;
    let end = state.snapshot(collisions);
    let ledger = StrokeLedger {
        kind,
        steps,
        q_al: q,
        w_al: 0.0,
        w_mech: 0.0,
        energy_start: start.energy(),
        energy_end: end.energy(),
        entropy_start: start.entropy,
        entropy_end: end.entropy,
        mutual_info_start: start.mutual_info,
        mutual_info_end: end.mutual_info,
        length_start: state.length(),
        length_end: state.length(),
        collisions,
        truncation_tail: truncation,
        status,
    };
    Ok((state, ledger))
}

/// Where a mirror stroke ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AdiabatTarget {
    /// Fixed final length, reached in `steps_per_adiabat` equal steps.
    Length(f64),
    /// Final length at which the leading cavity's pressure equals this value.
    Pressure(f64),
}

/// Moves the mirrors with no ancillas present. The Fock populations are
/// carried along unchanged, so ⟨n_i⟩, the spectrum and the correlations stay
/// fixed while every ω_i = 2π/L changes.
///
/// Per step L → L + δL the ledger adds
/// ΔW_al = Σ_i (⟨n_i⟩ + ½)(ω_i' − ω_i) and ΔW_mech = Σ_i p_i(L + δL/2) S δL.
pub fn run_adiabat(
    mut state: EngineState,
    kind: StrokeKind,
    target: AdiabatTarget,
    config: &EngineConfig,
) -> Result<(EngineState, StrokeLedger)> {
    let expanding = match kind {
        StrokeKind::Expansion => true,
        StrokeKind::Compression => false,
        _ => {
            return Err(Error::InvalidParameter {
                name: "kind",
                reason: "an adiabat is an expansion or a compression".into(),
            })
        }
    };
    let start = state.snapshot(0);
    let n = start.occupations.clone();
    let l0 = state.length();

    let pressure_at = |cavities: &[CavityConfig], l: f64| -> Result<f64> {
        Ok(mean_pressure(&cavities[0].with_length(l)?, n[0]))
    };

    // sequence of lengths visited after the start
    let lengths: Vec<f64> = if config.steps_per_adiabat == 0 {
        Vec::new()
    } else {
        match target {
            AdiabatTarget::Length(l_end) => {
                if !(l_end > 0.0) {
                    return Err(Error::NegativeLength(l_end));
                }
                let m = config.steps_per_adiabat;
                let dl = (l_end - l0) / m as f64;
                (1..=m)
                    .map(|k| if k == m { l_end } else { l0 + k as f64 * dl })
                    .collect()
            }
            AdiabatTarget::Pressure(p_ext) => {
                let (step, max_steps) = match config.stroke {
                    StrokeMode::ForceBalance {
                        step_length,
                        max_steps,
                        ..
                    } => (step_length, max_steps),
                    StrokeMode::Ratio { .. } => (l0 * 1e-4, 1_000_000),
                };
                force_balance_lengths(l0, expanding, p_ext, step, max_steps, |l| {
                    pressure_at(&state.cavities, l)
                })?
            }
        }
    };

    let mut steps = Vec::new();
    if config.record_steps {
        steps.push(start.clone());
    }
    let (mut w_al, mut w_mech) = (0.0, 0.0);
    for (k, &l_new) in lengths.iter().enumerate() {
        if !(l_new > 0.0) {
            return Err(Error::NegativeLength(l_new));
        }
        let old = state.cavities.clone();
        let new: Vec<CavityConfig> = old
            .iter()
            .map(|c| c.with_length(l_new))
            .collect::<Result<_>>()?;
        let l_old = old[0].length;
        let dl = l_new - l_old;
        for ((c_old, c_new), &ni) in old.iter().zip(&new).zip(&n) {
            w_al += (ni + 0.5) * (c_new.omega() - c_old.omega());
            let mid = c_old.with_length(0.5 * (l_old + l_new))?;
            w_mech += mean_pressure(&mid, ni) * mid.cross_section * dl;
        }
        state.cavities = new;
        state.time += config.adiabat_step_time;
        if config.record_steps {
            steps.push(moved_snapshot(
                &state.cavities,
                n.clone(),
                start.entropies.clone(),
                start.entropy,
                start.mutual_info,
                state.time,
                (k + 1) as u64,
            ));
        }
    }

    // Tr[Δρ H] at the final frequencies; zero unless the state moved
    let q_al: f64 = state
        .cavities
        .iter()
        .zip(state.occupations().iter().zip(&n))
        .map(|(c, (after, before))| c.omega() * (after - before))
        .sum();
    let energy_end = state.energy();
    let ledger = StrokeLedger {
        kind,
        steps,
        q_al,
        w_al,
        w_mech,
        energy_start: start.energy(),
        energy_end,
        entropy_start: start.entropy,
        entropy_end: von_neumann_entropy(&state.rho),
        mutual_info_start: start.mutual_info,
        mutual_info_end: start.mutual_info,
        length_start: l0,
        length_end: state.length(),
        collisions: 0,
        truncation_tail: max_tail(&state.rho),
        status: RunStatus::Ok,
    };
    Ok((state, ledger))
}

/// Steps L until p(L) crosses `p_ext`, then bisects the final step.
fn force_balance_lengths(
    l0: f64,
    expanding: bool,
    p_ext: f64,
    step: f64,
    max_steps: usize,
    pressure: impl Fn(f64) -> Result<f64>,
) -> Result<Vec<f64>> {
    // pressure falls with L: expansion needs p > p_ext, compression p < p_ext
    let beyond = |p: f64| if expanding { p <= p_ext } else { p >= p_ext };
    let p0 = pressure(l0)?;
    if beyond(p0) {
        return Err(Error::ForceBalanceUnreachable {
            pressure: p0,
            target: p_ext,
        });
    }
    let sign = if expanding { 1.0 } else { -1.0 };
    let mut lengths = Vec::new();
    let mut l = l0;
    for _ in 0..max_steps {
        let next = l + sign * step;
        if !(next > 0.0) {
            return Err(Error::NegativeLength(next));
        }
        let p = pressure(next)?;
        if beyond(p) {
            let (mut inside, mut outside) = (l, next);
            let mut p_mid = p;
            let mut mid = next;
            while (p_mid - p_ext).abs() > FORCE_BALANCE_TOL * p_ext {
                mid = 0.5 * (inside + outside);
                p_mid = pressure(mid)?;
                if beyond(p_mid) {
                    outside = mid;
                } else {
                    inside = mid;
                }
                if (outside - inside).abs() <= f64::EPSILON * mid {
                    break;
                }
            }
            lengths.push(mid);
            return Ok(lengths);
        }
        lengths.push(next);
        l = next;
    }
    Err(Error::ForceBalanceUnreachable {
        pressure: pressure(l)?,
        target: p_ext,
    })
}

/// All cycles of a run; the last one is the reported cycle.
#[derive(Clone, Debug)]
pub struct EngineRun {
    pub cycles: Vec<CycleRecord>,
    pub final_state: EngineState,
}

impl EngineRun {
    pub fn last(&self) -> &CycleRecord {
        self.cycles.last().expect("at least one cycle runs")
    }

    pub fn status(&self) -> RunStatus {
        self.cycles
            .iter()
            .map(|c| c.status)
            .max()
            .unwrap_or_default()
    }
}

/// Runs cycles until a limit cycle is reached (if requested) or `cycles` is exhausted.
pub fn run_engine(config: &EngineConfig) -> Result<EngineRun> {
    config.validate()?;
    let mut kernels = KernelCache::default();
    let mut state = EngineState::initial(config)?;
    let mut l_hot = state.length();
    let mut cycles = Vec::new();
    for index in 0..config.cycles {
        let energy_start = state.energy();

        let (s, hot) = isochore(
            state,
            &config.hot,
            config.hot_budget,
            StrokeKind::HotIsochore,
            config.record_steps,
            &mut kernels,
        )?;
        let omega_hot = s.omega();
        let expand_to = match config.stroke {
            StrokeMode::Ratio { ratio } => AdiabatTarget::Length(l_hot * ratio),
            StrokeMode::ForceBalance {
                external_pressure, ..
            } => AdiabatTarget::Pressure(external_pressure),
        };
        let (s, expansion) = run_adiabat(s, StrokeKind::Expansion, expand_to, config)?;

        let (s, cold) = isochore(
            s,
            &config.cold,
            config.cold_budget,
            StrokeKind::ColdIsochore,
            config.record_steps,
            &mut kernels,
        )?;
        let omega_cold = s.omega();
        let compress_to = match config.stroke {
            StrokeMode::Ratio { .. } => AdiabatTarget::Length(l_hot),
            StrokeMode::ForceBalance {
                external_pressure, ..
            } => AdiabatTarget::Pressure(external_pressure),
        };
        let (s, compression) = run_adiabat(s, StrokeKind::Compression, compress_to, config)?;
        state = s;
        l_hot = state.length();

        let strokes = vec![hot, expansion, cold, compression];
        let w_mech_net: f64 = strokes.iter().map(|s| s.w_mech).sum();
        let w_al_net: f64 = strokes.iter().map(|s| s.w_al).sum();
        let q_hot = strokes[0].q_al;
        let q_cold = strokes[2].q_al;
        let energy_end = state.energy();
        let temperature_hot = config.hot.temperature(omega_hot)?;
        let temperature_cold = config.cold.temperature(omega_cold)?;
        let curzon = |th: Option<f64>, tc: Option<f64>| match (th, tc) {
            (Some(h), Some(c)) => Some(1.0 - (c / h).sqrt()),
            _ => None,
        };
        let eta_ca = curzon(temperature_hot, temperature_cold);
        let eta_ca_classical = curzon(
            config.hot.classical_temperature(omega_hot)?,
            config.cold.classical_temperature(omega_cold)?,
        );
        let limit_cycle = (energy_end - energy_start).abs() <= LIMIT_CYCLE_TOL * q_hot.abs();
        let status = strokes.iter().map(|s| s.status).max().unwrap_or_default();
        let record = CycleRecord {
            index,
            w_mech_net,
            w_al_net,
            q_hot,
            q_cold,
            eta: (q_hot > 0.0).then(|| w_mech_net / q_hot),
            eta_ca,
            eta_ca_classical,
            eta_otto_ideal: 1.0 - omega_cold / omega_hot,
            omega_hot,
            omega_cold,
            temperature_hot,
            temperature_cold,
            energy_start,
            energy_end,
            limit_cycle,
            collisions_hot: strokes[0].collisions,
            collisions_cold: strokes[2].collisions,
            status,
            strokes,
        };
        cycles.push(record);
        if limit_cycle && config.stop_at_limit_cycle {
            break;
        }
    }
    Ok(EngineRun {
        cycles,
        final_state: state,
    })
}

/// Runs the engine and returns its last cycle.
pub fn run_cycle(config: &EngineConfig) -> Result<CycleRecord> {
    let mut run = run_engine(config)?;
    Ok(run.cycles.pop().expect("at least one cycle runs"))
}
