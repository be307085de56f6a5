use proptest::prelude::*;

use eqfree::analysis::{Stability, STABLE_MARGIN, UNSTABLE_MARGIN};
use eqfree::config::parse_config;
use eqfree::grid::{MacroState, ToothConfig};
use eqfree::kp::{synthesize_force_field, FieldSpec};
use eqfree::micro::SdeModel;
use eqfree::output::format_number;
use eqfree::patch::{lift, restrict, GapToothStepper, LiftingScheme, MacroStepper, PatchConfig, ToothField, WindSign};
use eqfree::pde::PdeSpec;
use eqfree::projective::{coarse_projective_step, CoarseStepConfig};
use eqfree::rng::RngStreamSpec;

fn scheme(i: usize) -> LiftingScheme {
    match i % 4 {
        0 => LiftingScheme::CentralD2,
        1 => LiftingScheme::UpwindD2 {
            wind: WindSign::Positive,
        },
        2 => LiftingScheme::UpwindD2 {
            wind: WindSign::Negative,
        },
        _ => LiftingScheme::CentralD4,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn restrict_inverts_lift(
        values in prop::collection::vec(-1e3f64..1e3, 5..40),
        dx in 1e-3f64..2.0,
        frac in 0.01f64..0.99,
        which in 0usize..4,
    ) {
        let u = MacroState::new(values, dx, 0.0).unwrap();
        let h = frac * dx;
        let tooth = ToothConfig::unbuffered(h).unwrap();
        for j in 0..u.len() {
            let p = lift(&u, j, scheme(which), h).unwrap();
            let back = restrict(&ToothField::Exact(p), &tooth).unwrap();
            prop_assert!((back - u.values()[j]).abs() <= 1e-12 * u.values()[j].abs().max(1.0));
        }
    }

    #[test]
    fn constant_states_are_fixed_points(c in -1e3f64..1e3, which in 0usize..4, pde in 0usize..3) {
        let n = 24;
        let dx = std::f64::consts::TAU / n as f64;
        let (pde, dt) = match pde {
            0 => (PdeSpec::heat(), 0.4 * dx * dx),
            1 => (PdeSpec::advection(), 0.5 * dx),
            _ => (PdeSpec::biharmonic(), 0.05 * dx.powi(4)),
        };
        let cfg = PatchConfig::new(scheme(which), ToothConfig::unbuffered(0.5 * dx).unwrap(), 1e-3 * dt, dt).unwrap();
        let s = GapToothStepper { pde, cfg };
        let u = MacroState::new(vec![c; n], dx, 0.0).unwrap();
        let next = s.advance(&u).unwrap();
        for v in next.values() {
            prop_assert!((v - c).abs() <= 1e-12 * c.abs().max(1.0));
        }
    }

    #[test]
    fn gap_tooth_step_is_linear(
        a in prop::collection::vec(-1.0f64..1.0, 16),
        b in prop::collection::vec(-1.0f64..1.0, 16),
        s in -3.0f64..3.0,
        which in 0usize..4,
    ) {
        let dx = 0.3;
        let dt = 0.4 * dx * dx;
        let cfg = PatchConfig::new(scheme(which), ToothConfig::unbuffered(0.5 * dx).unwrap(), 1e-3 * dt, dt).unwrap();
        let st = GapToothStepper { pde: PdeSpec::heat(), cfg };
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
        let ua = st.advance(&MacroState::new(a, dx, 0.0).unwrap()).unwrap();
        let ub = st.advance(&MacroState::new(b, dx, 0.0).unwrap()).unwrap();
        let um = st.advance(&MacroState::new(mix, dx, 0.0).unwrap()).unwrap();
        for j in 0..16 {
            let expected = ua.values()[j] + s * ub.values()[j];
            prop_assert!((um.values()[j] - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn stability_classes_follow_thresholds(g in 0.0f64..2.0) {
        let expected = if g > 1.0 + UNSTABLE_MARGIN {
            Stability::Unstable
        } else if g < 1.0 - STABLE_MARGIN {
            Stability::Stable
        } else {
            Stability::Marginal
        };
        prop_assert_eq!(Stability::classify(g), expected);
    }

    #[test]
    fn noiseless_zero_drift_step_is_identity(x in -1e3f64..1e3, n in 1usize..20, k in 1usize..20, seed: u64) {
        let cfg = CoarseStepConfig::new(n, k, 1e-3, 0.1).unwrap();
        let model = SdeModel::pure_noise().with_noise_amplitude(0.0);
        let next = coarse_projective_step(x, &model, &cfg, RngStreamSpec::new(seed, 0, 0)).unwrap();
        prop_assert_eq!(next, x);
    }

    #[test]
    fn coarse_step_is_deterministic_per_stream(x in -5.0f64..5.0, seed: u64, step in 0u64..1000) {
        let cfg = CoarseStepConfig::new(5, 4, 1e-3, 0.05).unwrap();
        let model = SdeModel::ornstein_uhlenbeck(1.0);
        let spec = RngStreamSpec::new(seed, 0, step);
        prop_assert_eq!(
            coarse_projective_step(x, &model, &cfg, spec).unwrap(),
            coarse_projective_step(x, &model, &cfg, spec).unwrap()
        );
    }

    #[test]
    fn force_is_minus_potential_gradient(seed: u64, x in prop::collection::vec(0.0f64..6.3, 3)) {
        let field = synthesize_force_field(&FieldSpec {
            dim: 3,
            n_modes: 3,
            spectrum: 1.0,
            strength: 1.0,
            directions: 4,
            seed,
        })
        .unwrap();
        let f = field.force(&x);
        let eps = 1e-5;
        for d in 0..3 {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[d] += eps;
            minus[d] -= eps;
            let grad = (field.potential(&plus) - field.potential(&minus)) / (2.0 * eps);
            prop_assert!((f[d] + grad).abs() < 1e-7, "component {}: {} vs {}", d, f[d], -grad);
        }
    }

    #[test]
    fn numbers_survive_formatting(v in prop::num::f64::NORMAL | prop::num::f64::ZERO) {
        let back: f64 = format_number(v).parse().unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn config_echo_round_trips(seed: u64, n in 1usize..10_000, k in 1usize..100, steps in 1usize..100_000) {
        let text = format!(
            "[experiment]\nname = projective\nseed = {seed}\n[parameters]\nN = {n}\nk = {k}\ndt_micro = 1e-3\ndt_macro = 0.1\nn_steps = {steps}\n"
        );
        let cfg = parse_config(&text).unwrap();
        let again = parse_config(&cfg.echo()).unwrap();
        prop_assert_eq!(cfg.echo(), again.echo());
        prop_assert_eq!(again.seed, seed);
    }
}
