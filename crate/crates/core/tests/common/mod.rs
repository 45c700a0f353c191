//! Oracles shared by the property suites and the acceptance target.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use telc_core::error_model::{linearized_model, nonlinear_error_rate, ErrorInput, ErrorState};
use telc_core::estimation::{ekf_predict, ekf_update, Ekf, EkfConfig, EkfState, Measurement, MotionModel};
use telc_core::harness::{ScenarioConfig, TraceRow};
use telc_core::kinematics::Pose;
use telc_core::mpc::{condense, MpcConfig, MpcController};
use telc_core::qp::QpProblem;
use telc_core::telc::{GainSet, TelcConfig};

pub fn scenario(file: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(file);
    ScenarioConfig::from_file(&path).unwrap()
}

// ---------------------------------------------------------------------------
// learning laws

/// `(e1_dot, e2_dot, e2_ddot)` from `e_dot = A e + B u_e` and
/// `e2_ddot = A[1, :] e_dot` (the input is held, so `B u_e` has no rate).
pub fn linear_model_rates(e: &ErrorState, nu: f64, omega: f64, nu_r: f64, omega_r: f64) -> (f64, f64, f64) {
    let m = linearized_model(nu_r, omega_r);
    let u = ErrorInput::new(nu - nu_r, omega - omega_r);
    let e_dot = m.a * e.as_vector() + m.b * u.as_vector();
    let e_ddot = m.a * e_dot;
    (e_dot[0], e_dot[1], e_ddot[1])
}

/// Learning costs as functions of the coefficients with the feedback held.
pub fn costs_of_gains(
    k: &GainSet,
    e: &ErrorState,
    u_b: &ErrorInput,
    nu_r: f64,
    omega_r: f64,
    cfg: &TelcConfig,
) -> (f64, f64) {
    let nu = nu_r * k.k_nu_1 + k.k_nu_0 + u_b.nu_e;
    let omega = omega_r * k.k_omega_1 + k.k_omega_0 + u_b.omega_e;
    let (d1, d2, dd2) = linear_model_rates(e, nu, omega, nu_r, omega_r);
    let l = cfg.lambda_omega;
    let s_nu = d1 + cfg.lambda_nu * e.e1;
    let s_omega = dd2 + 2.0 * l * d2 + l * l * e.e2;
    (0.5 * s_nu * s_nu, 0.5 * s_omega * s_omega)
}

pub struct LearningCase {
    pub gains: GainSet,
    pub e: ErrorState,
    pub u_b: ErrorInput,
    pub nu_r: f64,
    pub omega_r: f64,
}

pub fn random_learning_case(rng: &mut ChaCha8Rng) -> LearningCase {
    let mut nu_r = rng.random_range(0.05..1.0);
    if rng.random_bool(0.3) {
        nu_r = -nu_r;
    }
    LearningCase {
        gains: GainSet::new(
            rng.random_range(0.5..1.5),
            rng.random_range(-0.2..0.2),
            rng.random_range(0.5..1.5),
            rng.random_range(-0.2..0.2),
        ),
        e: ErrorState::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
        ),
        u_b: ErrorInput::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)),
        nu_r,
        omega_r: rng.random_range(-0.5..0.5),
    }
}

fn perturbed(k: &GainSet, i: usize, h: f64) -> GainSet {
    let mut a = k.as_array();
    a[i] += h;
    GainSet::new(a[0], a[1], a[2], a[3])
}

/// `-alpha_i dE/dk_i` by central differences; each coefficient descends its
/// own channel's cost.
pub fn fd_descent_rates(c: &LearningCase, cfg: &TelcConfig) -> [f64; 4] {
    let alphas = [cfg.alpha_nu_1, cfg.alpha_nu_0, cfg.alpha_omega_1, cfg.alpha_omega_0];
    let h = 1e-4;
    std::array::from_fn(|i| {
        let cost = |k: &GainSet| {
            let (e_nu, e_omega) = costs_of_gains(k, &c.e, &c.u_b, c.nu_r, c.omega_r, cfg);
            if i < 2 {
                e_nu
            } else {
                e_omega
            }
        };
        let grad = (cost(&perturbed(&c.gains, i, h)) - cost(&perturbed(&c.gains, i, -h))) / (2.0 * h);
        -alphas[i] * grad
    })
}

/// Coefficient rates of the learner, `(k_next - k) / dt`.
pub fn analytic_rates(c: &LearningCase, cfg: &TelcConfig) -> [f64; 4] {
    use telc_core::kinematics::VelocityCommand;
    use telc_core::telc::TelcLearner;
    let mut learner = TelcLearner::new(cfg.clone(), c.gains).unwrap();
    let u_f = learner.feedforward(c.nu_r, c.omega_r);
    let applied = VelocityCommand::new(u_f.nu + c.u_b.nu_e, u_f.omega + c.u_b.omega_e);
    let next = learner
        .learn(&c.e, applied, applied, c.nu_r, c.omega_r)
        .gains
        .as_array();
    let k = c.gains.as_array();
    std::array::from_fn(|i| (next[i] - k[i]) / cfg.t_step)
}

/// Worst relative mismatch between the learner and the finite-difference
/// gradients over `n` seeded states. The absolute floor covers rates that
/// vanish to rounding.
pub fn gradient_law_worst_error(seed: u64, n: usize) -> f64 {
    let cfg = TelcConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let c = random_learning_case(&mut rng);
        let fd = fd_descent_rates(&c, &cfg);
        let an = analytic_rates(&c, &cfg);
        for i in 0..4 {
            let err = (fd[i] - an[i]).abs() / fd[i].abs().max(an[i].abs()).max(1e-9);
            worst = worst.max(err);
        }
    }
    worst
}

/// `alpha * (ds/dk)^2` written out per coefficient.
pub fn curvature_closed_form(nu_r: f64, omega_r: f64, cfg: &TelcConfig) -> [f64; 4] {
    [
        cfg.alpha_nu_1 * nu_r.powi(2),
        cfg.alpha_nu_0,
        cfg.alpha_omega_1 * nu_r.powi(2) * omega_r.powi(2),
        cfg.alpha_omega_0 * nu_r.powi(2),
    ]
}

/// Rows where `omega_r == 0` and the next row's `k_omega_1` differs in any bit.
/// Returns `(straight rows checked, violations)`.
pub fn straight_line_freeze(trace: &[TraceRow]) -> (usize, usize) {
    let mut checked = 0;
    let mut broken = 0;
    for pair in trace.windows(2) {
        if pair[0].omega_r == 0.0 {
            checked += 1;
            if pair[0].k_omega_1.to_bits() != pair[1].k_omega_1.to_bits() {
                broken += 1;
            }
        }
    }
    (checked, broken)
}

// ---------------------------------------------------------------------------
// QP grid oracle

pub const GRID_STEP: f64 = 1e-3;

/// Problem restated in box coordinates `w = C x`.
pub struct BoxQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl BoxQp {
    pub fn from_problem(p: &QpProblem) -> Self {
        let c_inv = p.c.clone().try_inverse().expect("invertible constraint map");
        Self {
            h: c_inv.transpose() * &p.h * &c_inv,
            g: c_inv.transpose() * &p.g,
            lower: p.lower.clone(),
            upper: p.upper.clone(),
        }
    }
}

pub fn grid(lo: f64, hi: f64) -> Vec<f64> {
    let n = ((hi - lo) / GRID_STEP).round() as usize;
    (0..=n).map(|i| (lo + i as f64 * GRID_STEP).min(hi)).collect()
}

/// Exact minimum of a strictly convex 2-D quadratic over a box, found by
/// checking the interior stationary point, the four edges and the corners.
pub fn box_min_2d(p: &Matrix2<f64>, q: &Vector2<f64>, lo: [f64; 2], hi: [f64; 2]) -> f64 {
    let f = |z: Vector2<f64>| 0.5 * z.dot(&(p * z)) + q.dot(&z);
    let inside = |z: &Vector2<f64>| (0..2).all(|i| z[i] >= lo[i] - 1e-15 && z[i] <= hi[i] + 1e-15);
    let mut best = f64::INFINITY;
    if let Some(inv) = p.try_inverse() {
        let z = -(inv * q);
        if inside(&z) {
            best = best.min(f(z));
        }
    }
    for fixed in 0..2 {
        let free = 1 - fixed;
        for v in [lo[fixed], hi[fixed]] {
            let mut z = Vector2::zeros();
            z[fixed] = v;
            z[free] = (-(q[free] + p[(free, fixed)] * v) / p[(free, free)]).clamp(lo[free], hi[free]);
            best = best.min(f(z));
        }
    }
    best
}

/// Grid over the first input pair; for a second pair the inner problem is
/// solved exactly by [`box_min_2d`].
pub fn grid_minimum(b: &BoxQp) -> f64 {
    let n = b.g.len();
    assert!(n == 2 || n == 4);
    let g0 = grid(b.lower[0], b.upper[0]);
    let g1 = grid(b.lower[1], b.upper[1]);
    let mut best = f64::INFINITY;
    for &a in &g0 {
        for &c in &g1 {
            let head =
                0.5 * (b.h[(0, 0)] * a * a + 2.0 * b.h[(0, 1)] * a * c + b.h[(1, 1)] * c * c) + b.g[0] * a + b.g[1] * c;
            let value = if n == 2 {
                head
            } else {
                let p = Matrix2::new(b.h[(2, 2)], b.h[(2, 3)], b.h[(3, 2)], b.h[(3, 3)]);
                let q = Vector2::new(
                    b.g[2] + b.h[(2, 0)] * a + b.h[(2, 1)] * c,
                    b.g[3] + b.h[(3, 0)] * a + b.h[(3, 1)] * c,
                );
                head + box_min_2d(&p, &q, [b.lower[2], b.lower[3]], [b.upper[2], b.upper[3]])
            };
            best = best.min(value);
        }
    }
    best
}

pub fn random_mpc_problem(rng: &mut ChaCha8Rng) -> QpProblem {
    let n_p = rng.random_range(1..=3usize);
    let n_c = rng.random_range(1..=n_p.min(2));
    let cfg = MpcConfig {
        n_p,
        n_c,
        ..MpcConfig::default()
    };
    // errors up to 1.5 m so that the input box is often active
    let e = ErrorState::new(
        rng.random_range(-1.5..1.5),
        rng.random_range(-1.5..1.5),
        rng.random_range(-1.0..1.0),
    );
    let horizon: Vec<(f64, f64)> = (0..n_p)
        .map(|_| (rng.random_range(-0.5..0.5), rng.random_range(-0.3..0.3)))
        .collect();
    let last = ErrorInput::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
    condense(&e, &horizon, &cfg, &last).unwrap().qp
}

pub struct GridComparison {
    pub worst_gap: f64,
    pub worst_violation: f64,
    pub with_active_bounds: usize,
}

pub fn compare_with_grid(seed: u64, n: usize) -> GridComparison {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GridComparison {
        worst_gap: 0.0,
        worst_violation: 0.0,
        with_active_bounds: 0,
    };
    for _ in 0..n {
        let qp = random_mpc_problem(&mut rng);
        let sol = telc_core::qp::solve_qp(&qp, 1e-10).unwrap();
        let reference = grid_minimum(&BoxQp::from_problem(&qp));
        out.worst_gap = out.worst_gap.max((sol.objective - reference).abs());
        out.worst_violation = out.worst_violation.max(qp.violation(&sol.x));
        if sol.active_count() > 0 {
            out.with_active_bounds += 1;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// error model

/// Rate as a function of `(e, u_e)` about the reference `(nu_r, omega_r)`.
pub fn rate(x: &[f64; 5], nu_r: f64, omega_r: f64) -> [f64; 3] {
    let e = ErrorState::new(x[0], x[1], x[2]);
    let r = nonlinear_error_rate(&e, nu_r + x[3], omega_r + x[4], nu_r, omega_r);
    [r.e1, r.e2, r.e3]
}

pub fn linear_residual(eps: f64, dir: &[f64; 5], nu_r: f64, omega_r: f64) -> f64 {
    let m = linearized_model(nu_r, omega_r);
    let x: [f64; 5] = std::array::from_fn(|i| eps * dir[i]);
    let nl = rate(&x, nu_r, omega_r);
    let e = Vector3::new(x[0], x[1], x[2]);
    let u = Vector2::new(x[3], x[4]);
    let lin = m.a * e + m.b * u;
    (0..3).map(|i| (nl[i] - lin[i]).powi(2)).sum::<f64>().sqrt()
}

/// Largest entry-wise gap between the central-difference Jacobian at the
/// origin and `[A | B]`.
pub fn jacobian_worst_error(nu_r: f64, omega_r: f64) -> f64 {
    let m = linearized_model(nu_r, omega_r);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for j in 0..5 {
        let mut xp = [0.0; 5];
        let mut xm = [0.0; 5];
        xp[j] = h;
        xm[j] = -h;
        let (fp, fm) = (rate(&xp, nu_r, omega_r), rate(&xm, nu_r, omega_r));
        for i in 0..3 {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            let exact = if j < 3 { m.a[(i, j)] } else { m.b[(i, j - 3)] };
            worst = worst.max((fd - exact).abs());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// regulation

pub const REG_NU_R: f64 = 0.3;
pub const REG_OMEGA_R: f64 = 0.05;

/// Continuous linear error model under a held input, integrated with RK4.
pub fn continuous_step(e: &ErrorState, u: &ErrorInput, dt: f64) -> ErrorState {
    let m = linearized_model(REG_NU_R, REG_OMEGA_R);
    let f = |x: &Vector3<f64>| m.a * x + m.b * u.as_vector();
    let h = dt / 20.0;
    let mut x = e.as_vector();
    for _ in 0..20 {
        let k1 = f(&x);
        let k2 = f(&(x + k1 * (h / 2.0)));
        let k3 = f(&(x + k2 * (h / 2.0)));
        let k4 = f(&(x + k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    ErrorState::from_vector(&x)
}

pub struct Regulation {
    /// First step with `|e| <= 1e-3`.
    pub settled_at: Option<usize>,
    pub violations: usize,
}

pub fn regulate(e0: ErrorState, budget: usize) -> Regulation {
    let cfg = MpcConfig::default();
    let horizon = vec![(REG_NU_R, REG_OMEGA_R); cfg.n_p];
    let mut mpc = MpcController::new(cfg.clone()).unwrap();
    let mut e = e0;
    let mut out = Regulation {
        settled_at: None,
        violations: 0,
    };
    for k in 0..=budget {
        if e.norm() <= 1e-3 && out.settled_at.is_none() {
            out.settled_at = Some(k);
        }
        if k == budget {
            break;
        }
        let (u, _) = mpc.step(&e, &horizon).unwrap();
        if !cfg.within_bounds(&u) {
            out.violations += 1;
        }
        e = continuous_step(&e, &u, cfg.t_step);
    }
    out
}

/// Unit directions for the regulation examples: the three axes and a mix.
pub fn regulation_starts(radius: f64) -> Vec<ErrorState> {
    let mix = Vector3::new(-1.0, 1.0, -1.414).normalize() * radius;
    vec![
        ErrorState::new(radius, 0.0, 0.0),
        ErrorState::new(0.0, radius, 0.0),
        ErrorState::new(0.0, 0.0, radius),
        ErrorState::new(-radius, 0.0, 0.0),
        ErrorState::new(0.0, -radius, 0.0),
        ErrorState::from_vector(&mix),
    ]
}

// ---------------------------------------------------------------------------
// estimator

pub fn psd_ok(s: &EkfState) -> bool {
    s.asymmetry() <= 1e-12 && s.min_eigenvalue() >= -1e-10
}

/// Random predict/update cycles with occasionally reshuffled noise levels.
/// Returns the number of cycles after which the covariance was not PSD.
pub fn random_cycle_psd_failures(seed: u64, cycles: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = EkfConfig::default();
    let mut state = EkfState::new(Pose::default(), Matrix3::from_diagonal_element(0.1));
    let mut failures = 0;
    for k in 0..cycles {
        if k % 1000 == 0 {
            cfg.process_noise = [
                rng.random_range(1e-8..1e-1),
                rng.random_range(1e-8..1e-1),
                rng.random_range(1e-9..1e-2),
            ];
            cfg.gnss_variance = [rng.random_range(1e-9..1e-1), rng.random_range(1e-9..1e-1)];
            cfg.motion_model = if rng.random_bool(0.5) {
                MotionModel::Euler
            } else {
                MotionModel::Midpoint
            };
        }
        state = ekf_predict(&state, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), &cfg);
        let predicted_ok = psd_ok(&state);
        let z = Measurement {
            valid: rng.random_bool(0.9),
            ..Measurement::position(
                state.mean.x + rng.random_range(-1.0..1.0),
                state.mean.y + rng.random_range(-1.0..1.0),
            )
        };
        state = ekf_update(&state, &z, &cfg).unwrap();
        if !(predicted_ok && psd_ok(&state)) {
            failures += 1;
        }
    }
    failures
}

/// Worst pose gap when the truth follows the filter's own motion model and
/// the fixes are exact.
pub fn noiseless_tracking(model: MotionModel) -> f64 {
    let cfg = EkfConfig {
        motion_model: model,
        ..EkfConfig::default()
    };
    let mut truth = EkfState::new(Pose::new(0.5, -0.5, 0.3), Matrix3::zeros());
    let mut ekf = Ekf::new(cfg.clone(), truth.mean).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..5000 {
        let t = k as f64 * 0.2;
        let (nu, omega) = (0.3 + 0.1 * (0.01 * t).sin(), 0.08 * (0.03 * t).cos());
        truth = ekf_predict(&truth, nu, omega, &cfg);
        ekf.predict(nu, omega);
        ekf.update(&Measurement::position(truth.mean.x, truth.mean.y)).unwrap();
        let m = ekf.state().mean;
        worst = worst
            .max(m.distance_to(&truth.mean))
            .max(telc_core::kinematics::normalize_angle(m.theta - truth.mean.theta).abs());
    }
    worst
}
