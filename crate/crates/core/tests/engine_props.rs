use phaseonium::engine::{
    run_cycle, work_heat_audit, BathSpec, CavityConfig, EngineConfig, StrokeKind,
};
use proptest::prelude::*;

fn engine(t_hot: f64, t_cold: f64, ratio: f64, phi_hot: f64) -> EngineConfig {
    EngineConfig {
        cavity: CavityConfig::new(1.0, 1.0, 20).unwrap(),
        hot: phaseonium::engine::BathConfig::new(BathSpec::Temperature {
            temperature: t_hot,
            phi: phi_hot,
        }),
        cold: phaseonium::engine::BathConfig::new(BathSpec::Temperature {
            temperature: t_cold,
            phi: std::f64::consts::PI,
        }),
        stroke: phaseonium::engine::StrokeMode::Ratio { ratio },
        steps_per_adiabat: 50,
        cycles: 3,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn strokes_obey_the_first_law(
        t_hot in 0.8f64..3.0,
        t_cold in 0.01f64..0.5,
        ratio in 1.001f64..1.05,
        phi_hot in 0.6f64..1.0,
    ) {
        let cfg = engine(t_hot, t_cold, ratio, phi_hot * std::f64::consts::PI);
        let c = run_cycle(&cfg).unwrap();
        for s in &c.strokes {
            let scale = s.q_al.abs().max(s.w_al.abs()).max(s.energy_start.abs());
            prop_assert!(s.first_law_residual() <= 1e-8 * scale);
            if s.kind.is_isochore() {
                prop_assert_eq!(s.w_al, 0.0);
                prop_assert_eq!(s.w_mech, 0.0);
            } else {
                prop_assert!(s.q_al.abs() <= 1e-8 * scale);
                prop_assert!((s.entropy_end - s.entropy_start).abs() < 1e-10);
            }
        }
        prop_assert!(work_heat_audit(&c).closed);
        prop_assert!(c.q_hot > 0.0);
        prop_assert!(c.eta.unwrap() <= c.eta_otto_ideal + 1e-12);
        prop_assert!(c.stroke(StrokeKind::Expansion).w_mech > 0.0);
    }
}
