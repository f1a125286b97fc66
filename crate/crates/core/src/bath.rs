//! Phaseonium ancillas: three-level Λ atoms with a coherent ground doublet.
//!
//! Basis order is |e⟩, |g₁⟩, |g₂⟩. Populations are (α², β²/2, β²/2) with
//! β² = 1 − α², and the ground doublet carries the maximal coherence
//! ⟨g₁|λ|g₂⟩ = (β²/2) e^{iφ}.

use std::f64::consts::FRAC_PI_4;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::operator::{fock_space, DensityMatrix, C64};

/// Log arguments this close to 1 are reported as divergent.
pub const DIVERGENCE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseoniumParams {
    /// Excited-state amplitude, 0 < α < 1.
    pub alpha: f64,
    /// Ground-doublet coherence phase, radians.
    pub phi: f64,
    /// Resonant angular frequency, t⁻¹.
    pub omega: f64,
}

impl PhaseoniumParams {
    pub fn new(alpha: f64, phi: f64, omega: f64) -> Result<Self> {
        let p = Self { alpha, phi, omega };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(
                "alpha",
                format!("{} is outside (0, 1)", self.alpha),
            ));
        }
        if !self.phi.is_finite() {
            return Err(invalid("phi", "not finite"));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(invalid("omega", format!("{} is not positive", self.omega)));
        }
        Ok(())
    }

    pub fn alpha_sq(&self) -> f64 {
        self.alpha * self.alpha
    }

    pub fn beta_sq(&self) -> f64 {
        1.0 - self.alpha * self.alpha
    }
}

/// 1 − sin φ, accurate near φ = π/2 where the naive difference cancels.
pub fn one_minus_sin(phi: f64) -> f64 {
    let s = (FRAC_PI_4 - 0.5 * phi).sin();
    2.0 * s * s
}

/// Upper bound on α for a positive apparent temperature, √((1−sinφ)/(3−sinφ)).
pub fn apparent_alpha_bound(phi: f64) -> f64 {
    let oms = one_minus_sin(phi);
    (oms / (2.0 + oms)).sqrt()
}

/// Upper bound on α for a positive classical temperature, √(1/3).
pub fn classical_alpha_bound() -> f64 {
    (1.0f64 / 3.0).sqrt()
}

/// Outcome of a temperature formula ω / ln(arg).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BathTemperature {
    Positive(f64),
    /// ln(arg) < 0: population inversion, negative temperature.
    Inverted(f64),
    /// arg within [`DIVERGENCE_TOL`] of 1.
    Divergent,
    /// arg ≤ 0.
    Unphysical,
}

impl BathTemperature {
    fn from_log_argument(omega: f64, arg: f64) -> Self {
        if !(arg > 0.0) {
            BathTemperature::Unphysical
        } else if (arg - 1.0).abs() < DIVERGENCE_TOL {
            BathTemperature::Divergent
        } else {
            let t = omega / arg.ln();
            if t > 0.0 {
                BathTemperature::Positive(t)
            } else {
                BathTemperature::Inverted(t)
            }
        }
    }

    /// The temperature when it is positive and finite.
    pub fn positive(self) -> Option<f64> {
        match self {
            BathTemperature::Positive(t) => Some(t),
            _ => None,
        }
    }

    pub fn reason(self) -> &'static str {
        match self {
            BathTemperature::Positive(_) => "ok",
            BathTemperature::Inverted(_) => "inverted",
            BathTemperature::Divergent => "divergent",
            BathTemperature::Unphysical => "unphysical",
        }
    }
}

/// T_φ = ω / ln(β²(1 − sin φ) / 2α²)
pub fn apparent_temperature(params: &PhaseoniumParams) -> Result<BathTemperature> {
    params.validate()?;
    let arg = params.beta_sq() * one_minus_sin(params.phi) / (2.0 * params.alpha_sq());
    Ok(BathTemperature::from_log_argument(params.omega, arg))
}

/// T_cl = ω / ln(β² / 2α²), the temperature delivered by the same atoms with
/// their ground coherence removed.
pub fn classical_temperature(params: &PhaseoniumParams) -> Result<BathTemperature> {
    params.validate()?;
    let arg = params.beta_sq() / (2.0 * params.alpha_sq());
    Ok(BathTemperature::from_log_argument(params.omega, arg))
}

/// α that makes the apparent temperature equal `temperature` at phase `phi`.
///
/// α² = (1 − sin φ) / (2 e^{ω/T} + 1 − sin φ), evaluated with e^{−ω/T} so that
/// very cold targets do not overflow.
pub fn solve_alpha_for_temperature(temperature: f64, phi: f64, omega: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(invalid(
            "temperature",
            format!("{temperature} is not positive"),
        ));
    }
    if !(omega > 0.0) {
        return Err(invalid("omega", format!("{omega} is not positive")));
    }
    let oms = one_minus_sin(phi);
    if oms <= 0.0 {
        return Err(invalid(
            "phi",
            "sin φ = 1 leaves no bright-state population",
        ));
    }
    let boltzmann = (-omega / temperature).exp();
    let alpha_sq = oms * boltzmann / (2.0 + oms * boltzmann);
    if !(alpha_sq > 0.0) {
        return Err(invalid(
            "temperature",
            format!("{temperature} is too cold to represent at ω = {omega}"),
        ));
    }
    Ok(alpha_sq.sqrt())
}

/// A phaseonium ancilla and its 3×3 density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseoniumState {
    params: PhaseoniumParams,
    rho: DensityMatrix,
}

impl PhaseoniumState {
    pub fn params(&self) -> &PhaseoniumParams {
        &self.params
    }

    pub fn rho(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn coherence(&self) -> C64 {
        self.rho.matrix()[(1, 2)]
    }

    /// Same populations with the ground coherence removed: the classical
    /// (diagonal Λ) reference fuel.
    pub fn dephased(&self) -> PhaseoniumState {
        let mut m = self.rho.matrix().clone();
        m[(1, 2)] = C64::new(0.0, 0.0);
        m[(2, 1)] = C64::new(0.0, 0.0);
        PhaseoniumState {
            params: self.params,
            rho: DensityMatrix::new_unchecked(self.rho.space().clone(), m),
        }
    }
}

pub fn build_phaseonium(params: &PhaseoniumParams) -> Result<PhaseoniumState> {
    params.validate()?;
    let a2 = params.alpha_sq();
    let half_b2 = 0.5 * params.beta_sq();
    let coh = C64::from_polar(half_b2, params.phi);
    let zero = C64::new(0.0, 0.0);
    let m = DMatrix::from_row_slice(
        3,
        3,
        &[
            C64::new(a2, 0.0),
            zero,
            zero,
            zero,
            C64::new(half_b2, 0.0),
            coh,
            zero,
            coh.conj(),
            C64::new(half_b2, 0.0),
        ],
    );
    let rho = DensityMatrix::new(fock_space(3)?, m)?;
    Ok(PhaseoniumState {
        params: *params,
        rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::{FRAC_PI_2, LN_2, PI};

    fn params(alpha_sq: f64, phi: f64, omega: f64) -> PhaseoniumParams {
        PhaseoniumParams::new(alpha_sq.sqrt(), phi, omega).unwrap()
    }

    #[test]
    fn construction_rule() {
        let s = build_phaseonium(&params(0.2, 0.0, 1.0)).unwrap();
        let m = s.rho().matrix();
        assert_abs_diff_eq!(m[(0, 0)].re, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(1, 1)].re, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(2, 2)].re, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(s.coherence().re, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(s.coherence().im, 0.0, epsilon = 1e-15);
        assert_eq!(m[(0, 1)], C64::new(0.0, 0.0));
        assert_eq!(m[(0, 2)], C64::new(0.0, 0.0));

        let rotated = build_phaseonium(&params(0.2, FRAC_PI_2, 1.0)).unwrap();
        assert_abs_diff_eq!(rotated.coherence().re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rotated.coherence().im, 0.4, epsilon = 1e-15);
        assert_eq!(rotated.rho().matrix()[(2, 1)], rotated.coherence().conj());
    }

    #[test]
    fn rejects_alpha_out_of_range() {
        for alpha in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(PhaseoniumParams::new(alpha, 0.0, 1.0).is_err());
        }
    }

    #[test]
    fn spectrum_is_alpha_sq_beta_sq_zero() {
        for (a2, phi) in [(0.2, 0.0), (0.05, 1.3), (0.31, 4.0), (0.6, 2.2)] {
            let s = build_phaseonium(&params(a2, phi, 1.0)).unwrap();
            let mut expected = [0.0, a2, 1.0 - a2];
            expected.sort_by(f64::total_cmp);
            let ev = s.rho().eigenvalues();
            for (x, y) in ev.iter().zip(expected) {
                assert_abs_diff_eq!(*x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn apparent_temperature_direct_value() {
        let t = apparent_temperature(&params(0.2, 0.0, 1.0)).unwrap();
        assert_relative_eq!(t.positive().unwrap(), 1.0 / LN_2, max_relative = 1e-12);
    }

    #[test]
    fn apparent_equals_classical_at_integer_multiples_of_pi() {
        for k in 0..4 {
            let p = params(0.2, k as f64 * PI, 1.3);
            let tp = apparent_temperature(&p).unwrap().positive().unwrap();
            let tc = classical_temperature(&p).unwrap().positive().unwrap();
            assert_relative_eq!(tp / tc, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn apparent_boundary_is_divergent() {
        let phi: f64 = 0.7;
        let s = phi.sin();
        let a2 = (1.0 - s) / (3.0 - s);
        let t = apparent_temperature(&params(a2, phi, 1.0)).unwrap();
        assert_eq!(t, BathTemperature::Divergent);
        // beyond the boundary the log turns negative
        let t = apparent_temperature(&params(a2 * 1.1, phi, 1.0)).unwrap();
        assert!(matches!(t, BathTemperature::Inverted(v) if v < 0.0));
        let t = apparent_temperature(&params(0.2, FRAC_PI_2, 1.0)).unwrap();
        assert_eq!(t, BathTemperature::Unphysical);
    }

    #[test]
    fn classical_temperature_cases() {
        let t = classical_temperature(&params(0.2, 0.0, 1.0)).unwrap();
        assert_relative_eq!(t.positive().unwrap(), 1.0 / LN_2, max_relative = 1e-12);
        let t = classical_temperature(&params(1.0 / 3.0, 0.0, 1.0)).unwrap();
        assert_eq!(t, BathTemperature::Divergent);
        // coherence with sin φ > 0 depletes the bright state and heats
        let p = params(0.05, 0.5, 1.0);
        let tp = apparent_temperature(&p).unwrap().positive().unwrap();
        let tc = classical_temperature(&p).unwrap().positive().unwrap();
        assert!(tp / tc > 1.0);
    }

    #[test]
    fn solve_alpha_hand_value_and_limits() {
        let alpha = solve_alpha_for_temperature(1.0, 0.0, LN_2).unwrap();
        assert_relative_eq!(alpha * alpha, 0.2, max_relative = 1e-14);
        let phi = 4.1;
        let alpha = solve_alpha_for_temperature(1e12, phi, 1.0).unwrap();
        assert_relative_eq!(alpha, apparent_alpha_bound(phi), max_relative = 1e-9);
        assert!(solve_alpha_for_temperature(0.0, 0.0, 1.0).is_err());
        assert!(solve_alpha_for_temperature(-1.0, 0.0, 1.0).is_err());
        assert!(solve_alpha_for_temperature(1.0, FRAC_PI_2, 1.0).is_err());
    }

    #[test]
    fn solve_alpha_handles_very_cold_targets() {
        // ω/T ≈ 628: e^{ω/T} alone would overflow a naive evaluation of 2e^{ω/T}+1
        let alpha = solve_alpha_for_temperature(0.01, PI / 40.0, 2.0 * PI).unwrap();
        assert!(alpha > 0.0 && alpha < 1e-100);
        let p = PhaseoniumParams::new(alpha, PI / 40.0, 2.0 * PI).unwrap();
        let t = apparent_temperature(&p).unwrap().positive().unwrap();
        assert_relative_eq!(t, 0.01, max_relative = 1e-9);
    }

    #[test]
    fn one_minus_sin_is_accurate_near_quarter_turn() {
        let d: f64 = 1e-6;
        assert_relative_eq!(
            one_minus_sin(FRAC_PI_2 + d),
            0.5 * d * d,
            max_relative = 1e-6
        );
        assert_abs_diff_eq!(one_minus_sin(0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(one_minus_sin(1.5 * PI), 2.0, epsilon = 1e-15);
    }
}
