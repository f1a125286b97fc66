//! Four-stroke Otto cycle for one cavity or two cascaded cavities.
//!
//! Strokes run in the order hot isochore, expansion, cold isochore,
//! compression. Isochores exchange energy with a phaseonium beam at fixed
//! length; adiabats move the mirror with no ancillas present, carrying the
//! Fock populations along so that ⟨a†a⟩ and the entropy stay fixed while ω
//! follows 2π/L.
//!
//! Sign conventions: `q_al` and `w_al` are energy flowing into the field
//! (ΔE = Q + W), `w_mech` is work done by the field on the mirror. An
//! expansion therefore has `w_al < 0` and `w_mech > 0`.

mod cavity;
mod cycle;
mod ledger;

pub use cavity::{mean_pressure, pressure_operator, CavityConfig};
pub use cycle::{
    run_adiabat, run_cycle, run_engine, run_isochore, AdiabatTarget, EngineRun, EngineState,
};
pub use ledger::{
    work_heat_audit, AuditReport, CycleRecord, RunStatus, StepRecord, StrokeAudit, StrokeKind,
    StrokeLedger, LIMIT_CYCLE_TOL,
};

use serde::{Deserialize, Serialize};

use crate::bath::{
    apparent_temperature, build_phaseonium, classical_temperature, solve_alpha_for_temperature,
    PhaseoniumParams, PhaseoniumState,
};
use crate::collision::CollisionSettings;
use crate::error::{invalid, Result};

/// How a bath is specified: by the temperature it should impose (α is then
/// solved at the current cavity frequency) or by α directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BathSpec {
    Temperature { temperature: f64, phi: f64 },
    Alpha { alpha: f64, phi: f64 },
}

impl BathSpec {
    pub fn phi(&self) -> f64 {
        match *self {
            BathSpec::Temperature { phi, .. } | BathSpec::Alpha { phi, .. } => phi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    pub spec: BathSpec,
    /// False replaces the fuel by its dephased (classical) counterpart.
    #[serde(default = "default_true")]
    pub coherent: bool,
    #[serde(default)]
    pub collisions: CollisionSettings,
}

fn default_true() -> bool {
    true
}

impl BathConfig {
    pub fn new(spec: BathSpec) -> Self {
        Self {
            spec,
            coherent: true,
            collisions: CollisionSettings::default(),
        }
    }

    /// Ancilla parameters resonant with a cavity at `omega`.
    pub fn params(&self, omega: f64) -> Result<PhaseoniumParams> {
        match self.spec {
            BathSpec::Temperature { temperature, phi } => {
                let alpha = solve_alpha_for_temperature(temperature, phi, omega)?;
                PhaseoniumParams::new(alpha, phi, omega)
            }
            BathSpec::Alpha { alpha, phi } => PhaseoniumParams::new(alpha, phi, omega),
        }
    }

    pub fn fuel(&self, omega: f64) -> Result<PhaseoniumState> {
        let state = build_phaseonium(&self.params(omega)?)?;
        Ok(if self.coherent {
            state
        } else {
            state.dephased()
        })
    }

    /// Temperature the fuel imposes at `omega`, if positive and finite.
    pub fn temperature(&self, omega: f64) -> Result<Option<f64>> {
        let p = self.params(omega)?;
        let t = if self.coherent {
            apparent_temperature(&p)?
        } else {
            classical_temperature(&p)?
        };
        Ok(t.positive())
    }

    /// Temperature the same α would give with the coherence removed.
    pub fn classical_temperature(&self, omega: f64) -> Result<Option<f64>> {
        Ok(classical_temperature(&self.params(omega)?)?.positive())
    }
}

/// Collisions allowed per isochore.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IsochoreBudget {
    /// Until every cavity passes the windowed convergence test.
    Full,
    /// Exactly this many collisions, all cavities coupled throughout.
    Collisions(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StrokeMode {
    /// Expand to r·L and compress back, in `steps_per_adiabat` equal steps.
    Ratio { ratio: f64 },
    /// Move the mirror in steps of `step_length` until the leading cavity's
    /// time-averaged pressure crosses `external_pressure`, then bisect the
    /// last step to 1e−9 relative.
    ForceBalance {
        external_pressure: f64,
        step_length: f64,
        max_steps: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialState {
    Vacuum,
    Thermal { temperature: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    /// Geometry shared by every cavity; cascaded cavities move in lockstep.
    pub cavity: CavityConfig,
    /// 1 for a single cavity, 2 for the cascade.
    pub cavities: usize,
    pub hot: BathConfig,
    pub cold: BathConfig,
    pub stroke: StrokeMode,
    pub steps_per_adiabat: usize,
    pub hot_budget: IsochoreBudget,
    pub cold_budget: IsochoreBudget,
    /// Upper bound on cycles.
    pub cycles: usize,
    /// Stop as soon as a cycle closes its energy balance.
    pub stop_at_limit_cycle: bool,
    pub initial: InitialState,
    /// Clock advance per adiabat step, t. Only used to label time series.
    pub adiabat_step_time: f64,
    /// Keep per-step series in the ledgers.
    pub record_steps: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            cavity: CavityConfig::default(),
            cavities: 1,
            hot: BathConfig::new(BathSpec::Temperature {
                temperature: 2.0,
                phi: std::f64::consts::PI,
            }),
            cold: BathConfig::new(BathSpec::Temperature {
                temperature: 0.01,
                phi: std::f64::consts::PI,
            }),
            stroke: StrokeMode::Ratio { ratio: 1.01 },
            steps_per_adiabat: 1000,
            hot_budget: IsochoreBudget::Full,
            cold_budget: IsochoreBudget::Full,
            cycles: 5,
            stop_at_limit_cycle: true,
            initial: InitialState::Vacuum,
            adiabat_step_time: 1e-3,
            record_steps: true,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.cavity.validate()?;
        if !(1..=2).contains(&self.cavities) {
            return Err(invalid(
                "cavities",
                format!("{} (expected 1 or 2)", self.cavities),
            ));
        }
        self.hot.collisions.validate()?;
        self.cold.collisions.validate()?;
        match self.stroke {
            StrokeMode::Ratio { ratio } => {
                if !(ratio > 1.0 && ratio.is_finite()) {
                    return Err(invalid("ratio", format!("{ratio} must exceed 1")));
                }
            }
            StrokeMode::ForceBalance {
                external_pressure,
                step_length,
                max_steps,
            } => {
                if !(external_pressure > 0.0 && external_pressure.is_finite()) {
                    return Err(invalid("external_pressure", "must be positive"));
                }
                if !(step_length > 0.0) || max_steps == 0 {
                    return Err(invalid("step_length", "need a positive step and max_steps"));
                }
            }
        }
        if self.cycles == 0 {
            return Err(invalid("cycles", "at least one cycle"));
        }
        if let (
            BathSpec::Temperature {
                temperature: th, ..
            },
            BathSpec::Temperature {
                temperature: tc, ..
            },
        ) = (&self.hot.spec, &self.cold.spec)
        {
            if th < tc {
                return Err(invalid(
                    "temperature",
                    format!("hot bath {th} is colder than cold bath {tc}"),
                ));
            }
        }
        if let InitialState::Thermal { temperature } = self.initial {
            if !(temperature > 0.0) {
                return Err(invalid("initial.temperature", "must be positive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn temperature_spec_resolves_at_cavity_frequency() {
        let bath = BathConfig::new(BathSpec::Temperature {
            temperature: 2.0,
            phi: 0.7 * PI,
        });
        for &omega in &[1.0, 2.0 * PI] {
            let t = bath.temperature(omega).unwrap().unwrap();
            assert_relative_eq!(t, 2.0, max_relative = 1e-12);
        }
        let classical = BathConfig {
            coherent: false,
            ..bath.clone()
        };
        let tc = classical.temperature(1.0).unwrap().unwrap();
        assert_relative_eq!(tc, bath.classical_temperature(1.0).unwrap().unwrap());
        assert!(tc < 2.0);
    }

    #[test]
    fn config_validation() {
        assert!(EngineConfig::default().validate().is_ok());
        let bad = [
            EngineConfig {
                stroke: StrokeMode::Ratio { ratio: 0.9 },
                ..Default::default()
            },
            EngineConfig {
                cavities: 3,
                ..Default::default()
            },
            EngineConfig {
                stroke: StrokeMode::ForceBalance {
                    external_pressure: -1.0,
                    step_length: 1e-4,
                    max_steps: 10,
                },
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
        let mut c = EngineConfig::default();
        c.cold.spec = BathSpec::Temperature {
            temperature: 3.0,
            phi: 0.0,
        };
        assert!(c.validate().is_err());
    }
}
