use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operator::{annihilation, fock_space, HilbertSpace, Operator, C64};

/// One optical cavity: a single mode whose frequency follows the mirror, ω = 2π/L.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    /// Mirror separation L, t.
    pub length: f64,
    /// Mirror area S, t².
    pub cross_section: f64,
    /// Fock truncation N.
    pub levels: usize,
}

impl Default for CavityConfig {
    fn default() -> Self {
        Self {
            length: 1.0,
            cross_section: 1.0,
            levels: 20,
        }
    }
}

impl CavityConfig {
    pub fn new(length: f64, cross_section: f64, levels: usize) -> Result<Self> {
        let c = Self {
            length,
            cross_section,
            levels,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) {
            return Err(Error::NegativeLength(self.length));
        }
        if !(self.cross_section > 0.0 && self.cross_section.is_finite()) {
            return Err(invalid(
                "cross_section",
                format!("{} is not positive", self.cross_section),
            ));
        }
        if self.levels < 2 {
            return Err(invalid("levels", "a mode needs at least two Fock levels"));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        TAU / self.length
    }

    pub fn volume(&self) -> f64 {
        self.cross_section * self.length
    }

    pub fn space(&self) -> HilbertSpace {
        fock_space(self.levels).expect("levels validated")
    }

    pub fn with_length(&self, length: f64) -> Result<Self> {
        Self::new(length, self.cross_section, self.levels)
    }
}

/// Radiation pressure on the mirror,
/// π(t) = ω/(2V) (a†a + aa† − aa e^{−2iωt} − a†a† e^{2iωt}).
pub fn pressure_operator(config: &CavityConfig, t: f64) -> Result<Operator> {
    config.validate()?;
    let a = annihilation(&config.space())?;
    let ad = a.adjoint();
    let phase = C64::from_polar(1.0, -2.0 * config.omega() * t);
    let diag = ad.compose(&a)?.plus(&a.compose(&ad)?)?;
    let squeeze = a
        .compose(&a)?
        .scaled(phase)
        .plus(&ad.compose(&ad)?.scaled(phase.conj()))?;
    let total = diag.plus(&squeeze.scaled(C64::new(-1.0, 0.0)))?;
    Ok(total.scaled(C64::new(config.omega() / (2.0 * config.volume()), 0.0)))
}

/// Time average of ⟨π⟩ for a mode with occupation n: ω(2n + 1)/(2V).
pub fn mean_pressure(config: &CavityConfig, occupation: f64) -> f64 {
    config.omega() * (2.0 * occupation + 1.0) / (2.0 * config.volume())
}
