use std::f64::consts::TAU;

use phaseonium::bath::{
    apparent_alpha_bound, apparent_temperature, build_phaseonium, classical_alpha_bound,
    one_minus_sin, PhaseoniumParams,
};
use phaseonium::collision::{
    bose_einstein, effective_temperature, gibbs_state, mode_occupation, CollisionChannel,
    CollisionSettings,
};
use phaseonium::operator::{fock_space, DensityMatrix};
use proptest::prelude::*;

/// Valid (α, φ) pairs: α is a fraction of the tighter of the two domain bounds.
fn fuel_params() -> impl Strategy<Value = PhaseoniumParams> {
    (0.0..TAU, 0.05f64..0.95)
        .prop_filter("dark phase", |(phi, _)| one_minus_sin(*phi) > 1e-3)
        .prop_map(|(phi, f)| {
            let alpha = f * apparent_alpha_bound(phi).min(classical_alpha_bound());
            PhaseoniumParams::new(alpha, phi, TAU).unwrap()
        })
}

fn settings(duration: f64) -> CollisionSettings {
    CollisionSettings {
        duration,
        ..Default::default()
    }
}

fn diagonal_state(levels: usize) -> impl Strategy<Value = DensityMatrix> {
    prop::collection::vec(0.0f64..1.0, levels).prop_filter_map("zero draw", move |w| {
        let s: f64 = w.iter().sum();
        (s > 1e-6).then(|| {
            let p: Vec<f64> = w.iter().map(|x| x / s).collect();
            DensityMatrix::from_populations(&fock_space(levels).unwrap(), &p).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn single_channel_is_trace_preserving(
        params in fuel_params(),
        duration in 0.05f64..1.5,
        levels in 3usize..10,
    ) {
        let fuel = build_phaseonium(&params).unwrap();
        let ch = CollisionChannel::single(levels, fuel.rho(), &settings(duration)).unwrap();
        prop_assert!(ch.completeness_error() < 1e-10);
        prop_assert!(ch.preserves_diagonal());
        let t = ch.population_map().unwrap();
        for j in 0..levels {
            let col: f64 = (0..levels).map(|i| t[(i, j)]).sum();
            prop_assert!((col - 1.0).abs() < 1e-10);
            for i in 0..levels {
                prop_assert!(t[(i, j)] >= -1e-14);
            }
        }
    }

    #[test]
    fn collisions_keep_diagonal_states_valid(
        params in fuel_params(),
        rho in diagonal_state(8),
    ) {
        let fuel = build_phaseonium(&params).unwrap();
        let ch = CollisionChannel::single(8, fuel.rho(), &settings(0.5)).unwrap();
        let out = ch.apply(&rho).unwrap();
        prop_assert!((out.trace().re - 1.0).abs() < 1e-12);
        prop_assert!(out.min_eigenvalue() > -1e-12);
        prop_assert!(out.off_diagonal_mass() < 1e-12);
    }

    #[test]
    fn cascade_channel_is_trace_preserving(
        params in fuel_params(),
        duration in 0.1f64..1.0,
        active in prop::array::uniform2(any::<bool>()),
    ) {
        let fuel = build_phaseonium(&params).unwrap();
        let ch = CollisionChannel::cascade(&[4, 5], fuel.rho(), &settings(duration), &active).unwrap();
        prop_assert!(ch.completeness_error() < 1e-10);
    }

    #[test]
    fn gibbs_state_round_trips_temperature(
        ratio in 1.0f64..20.0,
        temperature in 0.2f64..5.0,
    ) {
        // 40 levels hold the whole distribution once ω/T ≥ 1
        let omega = ratio * temperature;
        let g = gibbs_state(40, omega, temperature).unwrap();
        let t = effective_temperature(&g, omega).unwrap();
        prop_assert!((t - temperature).abs() / temperature < 1e-6);
        let n = mode_occupation(&g, 0).unwrap();
        prop_assert!((n - bose_einstein(omega, temperature)).abs() < 1e-6);
    }

    #[test]
    fn apparent_temperature_is_positive_in_domain(params in fuel_params()) {
        prop_assert!(apparent_temperature(&params).unwrap().positive().is_some());
    }
}
