//! Run configuration: one TOML file with a section per experiment, plus
//! dotted `--set key=value` overrides applied before deserialization.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use phaseonium::collision::CollisionSettings;
use phaseonium::engine::{
    BathConfig, BathSpec, CavityConfig, EngineConfig, IsochoreBudget, StrokeMode,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    TempRatio,
    Thermalize,
    #[serde(alias = "single-engine-sweep")]
    EngineSweep,
    CascadeCycle,
    MiVsWork,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::TempRatio => "temp-ratio",
            Experiment::Thermalize => "thermalize",
            Experiment::EngineSweep => "engine-sweep",
            Experiment::CascadeCycle => "cascade-cycle",
            Experiment::MiVsWork => "mi-vs-work",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("override `{0}` is not of the form key=value")]
    Override(String),
    #[error("unsupported schema_version {0} (this build reads {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("config is for experiment `{config}` but `{requested}` was requested")]
    ExperimentMismatch {
        config: &'static str,
        requested: &'static str,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] phaseonium::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// When set, the file may only be used with this subcommand.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    /// Recorded in the manifest; every experiment is deterministic.
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub temp_ratio: TempRatioConfig,
    pub thermalize: ThermalizeConfig,
    pub engine_sweep: EngineSweepConfig,
    pub cascade_cycle: CascadeCycleConfig,
    pub mi_vs_work: MiVsWorkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: None,
            seed: 0,
            output_dir: None,
            temp_ratio: TempRatioConfig::default(),
            thermalize: ThermalizeConfig::default(),
            engine_sweep: EngineSweepConfig::default(),
            cascade_cycle: CascadeCycleConfig::default(),
            mi_vs_work: MiVsWorkConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    /// α evenly spaced on [alpha_min, alpha_max], φ evenly spaced on [0, 2π].
    Uniform,
    /// α at evenly spaced fractions of the tighter validity bound at each φ,
    /// φ = 2πk/phi_points for k = 0..=phi_points minus points with sin φ = 1.
    Valid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TempRatioConfig {
    pub omega: f64,
    pub grid: GridKind,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub fraction_min: f64,
    pub fraction_max: f64,
    pub alpha_points: usize,
    pub phi_points: usize,
    pub boundary_points: usize,
    /// Also thermalize a cavity with the coherent and the dephased fuel of every valid cell.
    pub simulate: bool,
    pub levels: usize,
    pub collisions: CollisionSettings,
}

impl Default for TempRatioConfig {
    fn default() -> Self {
        Self {
            omega: TAU,
            grid: GridKind::Uniform,
            alpha_min: 0.02,
            alpha_max: 0.8,
            fraction_min: 0.05,
            fraction_max: 0.5,
            alpha_points: 20,
            phi_points: 40,
            boundary_points: 181,
            simulate: false,
            levels: 20,
            collisions: CollisionSettings {
                convergence_tol: 1e-10,
                max_collisions: 1 << 40,
                ..Default::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalizeConfig {
    pub omega: f64,
    pub levels: usize,
    pub bath: BathConfig,
    /// Hard cap on collisions; absent means run until converged.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
}

impl Default for ThermalizeConfig {
    fn default() -> Self {
        Self {
            omega: TAU,
            levels: 20,
            bath: BathConfig::new(BathSpec::Temperature {
                temperature: 2.0,
                phi: 0.84 * PI,
            }),
            budget: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSweepConfig {
    pub engine: EngineConfig,
    /// φ_H grid in units of π.
    pub phi_hot_over_pi: Vec<f64>,
    /// φ_C grid in units of π.
    pub phi_cold_over_pi: Vec<f64>,
}

impl Default for EngineSweepConfig {
    fn default() -> Self {
        let slow = CollisionSettings {
            max_collisions: 1 << 40,
            ..Default::default()
        };
        let engine = EngineConfig {
            cavity: CavityConfig {
                length: 10.0 * PI,
                cross_section: 1.0,
                levels: 150,
            },
            hot: BathConfig {
                collisions: CollisionSettings {
                    convergence_tol: 1e-12,
                    ..slow.clone()
                },
                ..BathConfig::new(BathSpec::Temperature {
                    temperature: 2.0,
                    phi: PI,
                })
            },
            cold: BathConfig {
                collisions: slow,
                ..BathConfig::new(BathSpec::Temperature {
                    temperature: 0.01,
                    phi: PI,
                })
            },
            record_steps: false,
            ..Default::default()
        };
        Self {
            engine,
            phi_hot_over_pi: vec![1.0, 0.75, 0.6, 0.52, 0.501],
            phi_cold_over_pi: vec![1.0, 1.125, 1.25, 1.375, 1.5],
        }
    }
}

fn cascade_engine(phi_hot: f64, phi_cold: f64, budget: IsochoreBudget) -> EngineConfig {
    let collisions = CollisionSettings {
        duration: 0.5,
        ..Default::default()
    };
    EngineConfig {
        cavities: 2,
        hot: BathConfig {
            collisions: collisions.clone(),
            ..BathConfig::new(BathSpec::Temperature {
                temperature: 2.0,
                phi: phi_hot,
            })
        },
        cold: BathConfig {
            collisions,
            ..BathConfig::new(BathSpec::Temperature {
                temperature: 0.01,
                phi: phi_cold,
            })
        },
        stroke: StrokeMode::Ratio { ratio: 1.01 },
        steps_per_adiabat: 100,
        hot_budget: budget,
        cold_budget: budget,
        cycles: 80,
        ..Default::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeCycleConfig {
    pub engine: EngineConfig,
}

impl Default for CascadeCycleConfig {
    fn default() -> Self {
        Self {
            engine: cascade_engine(0.84 * PI, PI / 40.0, IsochoreBudget::Collisions(10)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiVsWorkConfig {
    /// Template; its isochore budgets are replaced by each entry of `budgets`.
    pub engine: EngineConfig,
    /// Descending: `"full"` first, then `{ collisions = n }` with decreasing n.
    pub budgets: Vec<IsochoreBudget>,
}

impl Default for MiVsWorkConfig {
    fn default() -> Self {
        Self {
            engine: cascade_engine(0.681 * PI, 1.525 * PI, IsochoreBudget::Full),
            budgets: vec![
                IsochoreBudget::Full,
                IsochoreBudget::Collisions(20),
                IsochoreBudget::Collisions(10),
                IsochoreBudget::Collisions(5),
            ],
        }
    }
}

impl RunConfig {
    /// Layers a TOML file and then the overrides over the defaults.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table =
            toml::from_str(&RunConfig::default().to_toml()).expect("defaults serialize to a table");
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.to_path_buf(),
                source,
            })?;
            let file = text
                .parse::<toml::Table>()
                .map_err(|e| ConfigError::Parse(e.to_string()))?;
            merge(&mut table, file);
        }
        for o in overrides {
            let mut layer = toml::Table::new();
            apply_override(&mut layer, o)?;
            merge(&mut table, layer);
        }
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema(config.schema_version));
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved configuration.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn check_experiment(&self, requested: Experiment) -> Result<(), ConfigError> {
        match self.experiment {
            Some(e) if e != requested => Err(ConfigError::ExperimentMismatch {
                config: e.name(),
                requested: requested.name(),
            }),
            _ => Ok(()),
        }
    }
}

/// Recursive overlay. A table carrying a different `kind` tag than the one
/// it lands on replaces it whole, so enum variants do not mix fields.
fn merge(base: &mut toml::Table, layer: toml::Table) {
    for (key, value) in layer {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(l))
                if b.get("kind") == l.get("kind") || l.get("kind").is_none() =>
            {
                merge(b, l)
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, or as a bare string
/// if that fails.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));

    let parts: Vec<&str> = key.split('.').collect();
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| {
            ConfigError::Invalid(format!("override `{key}`: `{part}` is not a table"))
        })?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
