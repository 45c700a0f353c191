mod common;

use common::{
    analytic_rates, costs_of_gains, curvature_closed_form, fd_descent_rates, gradient_law_worst_error,
    linear_model_rates, random_learning_case, scenario, straight_line_freeze,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use telc_core::error_model::ErrorState;
use telc_core::harness::{run_scenario, ControllerMode};
use telc_core::kinematics::VelocityCommand;
use telc_core::telc::{curvature_check, error_derivatives, telc_update, GainSet, TelcConfig, TelcLearner};

#[test]
fn update_laws_match_finite_difference_gradients() {
    let start = std::time::Instant::now();
    let worst = gradient_law_worst_error(5, 100);
    assert!(worst <= 1e-6, "worst relative error {worst:.3e}");
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn finite_differences_detect_a_wrong_sign() {
    // the oracle itself must be able to tell a flipped law apart
    let cfg = TelcConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = random_learning_case(&mut rng);
    let fd = fd_descent_rates(&c, &cfg);
    let an = analytic_rates(&c, &cfg);
    for i in 0..4 {
        assert!(fd[i] * an[i] >= 0.0);
        assert!((fd[i] + an[i]).abs() > 1e-6 || fd[i].abs() < 1e-9);
    }
}

#[test]
fn model_derivatives_agree_with_matrix_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let c = random_learning_case(&mut rng);
        let (nu, omega) = (c.nu_r + c.u_b.nu_e, c.omega_r + c.u_b.omega_e);
        let d = error_derivatives(&c.e, nu, omega, c.nu_r, c.omega_r);
        let (d1, d2, dd2) = linear_model_rates(&c.e, nu, omega, c.nu_r, c.omega_r);
        assert!((d.e1_dot - d1).abs() < 1e-14);
        assert!((d.e2_dot - d2).abs() < 1e-14);
        assert!((d.e2_ddot - dd2).abs() < 1e-14);
    }
}

#[test]
fn curvature_is_nonnegative_and_closed_form_on_figure_eight() {
    let cfg = scenario("figure_eight.toml").telc;
    let reference = scenario("figure_eight.toml").reference().unwrap();
    for s in reference.samples() {
        let got = curvature_check(s.nu, s.omega, &cfg);
        let expected = curvature_closed_form(s.nu, s.omega, &cfg);
        for i in 0..4 {
            assert!(got[i] >= 0.0);
            assert!((got[i] - expected[i]).abs() <= 1e-12);
        }
    }
}

#[test]
fn curvature_example_values() {
    let got = curvature_check(0.3, 0.05, &TelcConfig::default());
    let expected = [0.0135, 0.05, 0.0000225, 0.0045];
    for i in 0..4 {
        assert!((got[i] - expected[i]).abs() < 1e-15, "{i}: {}", got[i]);
    }
    assert_eq!(curvature_check(0.3, 0.0, &TelcConfig::default())[2], 0.0);
}

#[test]
fn curvature_matches_second_differences() {
    // E is quadratic in each coefficient, so the second difference is exact
    // up to rounding
    let cfg = TelcConfig::default();
    let alphas = [cfg.alpha_nu_1, cfg.alpha_nu_0, cfg.alpha_omega_1, cfg.alpha_omega_0];
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let c = random_learning_case(&mut rng);
        let curv = curvature_check(c.nu_r, c.omega_r, &cfg);
        let h = 1e-2;
        for i in 0..4 {
            let cost = |delta: f64| {
                let mut k = c.gains.as_array();
                k[i] += delta;
                let (e_nu, e_omega) = costs_of_gains(
                    &GainSet::new(k[0], k[1], k[2], k[3]),
                    &c.e,
                    &c.u_b,
                    c.nu_r,
                    c.omega_r,
                    &cfg,
                );
                if i < 2 {
                    e_nu
                } else {
                    e_omega
                }
            };
            let second = (cost(h) - 2.0 * cost(0.0) + cost(-h)) / (h * h);
            assert!(
                (alphas[i] * second - curv[i]).abs() < 1e-8,
                "{i}: {} vs {}",
                alphas[i] * second,
                curv[i]
            );
        }
    }
}

proptest! {
    #[test]
    fn a_small_step_does_not_raise_either_cost(
        e1 in -0.5f64..0.5, e2 in -0.5f64..0.5, e3 in -0.5f64..0.5,
        nu_r in 0.05f64..1.0, omega_r in -0.5f64..0.5,
        ub_nu in -0.1f64..0.1, ub_omega in -0.1f64..0.1,
        k in prop::array::uniform4(-0.5f64..1.5),
    ) {
        let base = TelcConfig::default();
        let cfg = TelcConfig {
            alpha_nu_1: base.alpha_nu_1 * 1e-3,
            alpha_nu_0: base.alpha_nu_0 * 1e-3,
            alpha_omega_1: base.alpha_omega_1 * 1e-3,
            alpha_omega_0: base.alpha_omega_0 * 1e-3,
            ..base
        };
        let gains = GainSet::new(k[0], k[1], k[2], k[3]);
        let e = ErrorState::new(e1, e2, e3);
        let u_b = telc_core::error_model::ErrorInput::new(ub_nu, ub_omega);
        let nu = nu_r * gains.k_nu_1 + gains.k_nu_0 + ub_nu;
        let omega = omega_r * gains.k_omega_1 + gains.k_omega_0 + ub_omega;
        let d = error_derivatives(&e, nu, omega, nu_r, omega_r);
        let next = telc_update(&gains, &e, &d, nu_r, omega_r, &cfg);
        let (e_nu0, e_omega0) = costs_of_gains(&gains, &e, &u_b, nu_r, omega_r, &cfg);
        // each channel descends its own cost along its own coefficients
        let nu_only = GainSet { k_omega_1: gains.k_omega_1, k_omega_0: gains.k_omega_0, ..next };
        let omega_only = GainSet { k_nu_1: gains.k_nu_1, k_nu_0: gains.k_nu_0, ..next };
        let (e_nu1, _) = costs_of_gains(&nu_only, &e, &u_b, nu_r, omega_r, &cfg);
        let (_, e_omega1) = costs_of_gains(&omega_only, &e, &u_b, nu_r, omega_r, &cfg);
        prop_assert!(e_nu1 <= e_nu0 + 1e-12);
        prop_assert!(e_omega1 <= e_omega0 + 1e-12);
    }

    #[test]
    fn straight_reference_freezes_k_omega_1(
        e1 in -1.0f64..1.0, e2 in -1.0f64..1.0, e3 in -1.0f64..1.0,
        nu_r in -1.0f64..1.0, nu in -1.0f64..1.0, omega in -1.0f64..1.0,
        k in prop::array::uniform4(-5.0f64..5.0),
    ) {
        let gains = GainSet::new(k[0], k[1], k[2], k[3]);
        let mut learner = TelcLearner::new(TelcConfig::default(), gains).unwrap();
        let applied = VelocityCommand::new(nu, omega);
        let next = learner.learn(&ErrorState::new(e1, e2, e3), applied, applied, nu_r, 0.0).gains;
        prop_assert_eq!(next.k_omega_1.to_bits(), gains.k_omega_1.to_bits());
    }
}

#[test]
fn straight_segments_freeze_k_omega_1_in_closed_loop() {
    let out = run_scenario(&scenario("figure_eight.toml")).unwrap();
    let (checked, broken) = straight_line_freeze(&out.trace);
    assert!(checked > 300, "only {checked} straight steps");
    assert_eq!(broken, 0);
    // and it does move on the arcs
    let first = out.trace[0].k_omega_1;
    assert!(out.trace.iter().any(|r| r.k_omega_1 != first));
}

#[test]
fn coefficients_stay_bounded() {
    for file in ["figure_eight.toml", "straight_gain.toml", "ideal_figure_eight.toml"] {
        let cfg = scenario(file).with_controller(ControllerMode::Telc);
        for seed in 0..3 {
            let out = run_scenario(&cfg.clone().with_seed(seed)).unwrap();
            let worst = out
                .trace
                .iter()
                .map(|r| GainSet::new(r.k_nu_1, r.k_nu_0, r.k_omega_1, r.k_omega_0).max_abs())
                .fold(out.summary.final_gains.max_abs(), f64::max);
            assert!(worst <= 10.0, "{file} seed {seed}: {worst}");
        }
    }
}
