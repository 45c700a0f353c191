//! Tracking-error learning of the feedforward coefficients.
//!
//! The feedforward action is an affine map of the reference controls,
//!
//! ```text
//! nu_f    = nu_r    * k_nu_1    + k_nu_0
//! omega_f = omega_r * k_omega_1 + k_omega_0
//! ```
//!
//! and the four coefficients follow gradient descent on
//! `E_nu = 0.5 s_nu^2` and `E_omega = 0.5 s_omega^2`, where
//! `s_nu = e1_dot + l_nu e1` and
//! `s_omega = e2_ddot + 2 l_omega e2_dot + l_omega^2 e2`.

use crate::error_model::ErrorState;
use crate::kinematics::VelocityCommand;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TelcError {
    #[error("invalid learning configuration: {0}")]
    InvalidConfig(String),
}

/// The four learned feedforward coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub k_nu_1: f64,
    pub k_nu_0: f64,
    pub k_omega_1: f64,
    pub k_omega_0: f64,
}

impl GainSet {
    /// `(1, 0, 1, 0)`: the feedforward equals the reference controls.
    pub const NOMINAL: GainSet = GainSet {
        k_nu_1: 1.0,
        k_nu_0: 0.0,
        k_omega_1: 1.0,
        k_omega_0: 0.0,
    };

    pub fn new(k_nu_1: f64, k_nu_0: f64, k_omega_1: f64, k_omega_0: f64) -> Self {
        Self {
            k_nu_1,
            k_nu_0,
            k_omega_1,
            k_omega_0,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.k_nu_1, self.k_nu_0, self.k_omega_1, self.k_omega_0]
    }

    pub fn max_abs(&self) -> f64 {
        self.as_array().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

impl Default for GainSet {
    fn default() -> Self {
        Self::NOMINAL
    }
}

/// Where `e1_dot`, `e2_dot` and `e2_ddot` come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    /// Linearized error model evaluated at the current error and velocities.
    #[default]
    Model,
    /// First-order filtered finite differences of the error signal.
    FilteredNumeric,
}

/// Which velocities enter the model-based derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocitySource {
    /// Encoder / gyro readings of what the robot actually does.
    #[default]
    Measured,
    /// The commanded totals `u_b + u_f`.
    Commanded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TelcConfig {
    pub alpha_nu_1: f64,
    pub alpha_nu_0: f64,
    pub alpha_omega_1: f64,
    pub alpha_omega_0: f64,
    pub lambda_nu: f64,
    pub lambda_omega: f64,
    #[serde(skip, default = "crate::mpc::default_t_step")]
    pub t_step: f64,
    pub derivatives: DerivativeSource,
    pub velocity_source: VelocitySource,
    /// Time constant of the numeric-derivative filter, seconds.
    pub filter_tau: f64,
}

impl Default for TelcConfig {
    fn default() -> Self {
        Self {
            alpha_nu_1: 0.15,
            alpha_nu_0: 0.05,
            alpha_omega_1: 0.1,
            alpha_omega_0: 0.05,
            lambda_nu: 3.0,
            lambda_omega: 3.0,
            t_step: 0.2,
            derivatives: DerivativeSource::Model,
            velocity_source: VelocitySource::Measured,
            filter_tau: 0.5,
        }
    }
}

impl TelcConfig {
    pub fn validate(&self) -> Result<(), TelcError> {
        let alphas = [self.alpha_nu_1, self.alpha_nu_0, self.alpha_omega_1, self.alpha_omega_0];
        if alphas.iter().any(|a| !(*a > 0.0)) {
            return Err(TelcError::InvalidConfig("learning rates must be positive".into()));
        }
        if !(self.lambda_nu > 0.0 && self.lambda_omega > 0.0) {
            return Err(TelcError::InvalidConfig("lambda values must be positive".into()));
        }
        if !(self.t_step > 0.0) {
            return Err(TelcError::InvalidConfig("t_step must be positive".into()));
        }
        if !(self.filter_tau >= 0.0) {
            return Err(TelcError::InvalidConfig("filter_tau must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorDerivatives {
    pub e1_dot: f64,
    pub e2_dot: f64,
    pub e2_ddot: f64,
}

pub fn feedforward(gains: &GainSet, nu_r: f64, omega_r: f64) -> VelocityCommand {
    VelocityCommand::new(
        nu_r * gains.k_nu_1 + gains.k_nu_0,
        omega_r * gains.k_omega_1 + gains.k_omega_0,
    )
}

/// Derivatives from the linearized error model with applied velocities
/// `(nu, omega)`.
pub fn error_derivatives(e: &ErrorState, nu: f64, omega: f64, nu_r: f64, omega_r: f64) -> ErrorDerivatives {
    ErrorDerivatives {
        e1_dot: omega_r * e.e2 - nu + nu_r,
        e2_dot: -omega_r * e.e1 + nu_r * e.e3,
        e2_ddot: -omega_r * omega_r * e.e2 + omega_r * nu - nu_r * omega,
    }
}

/// `(s_nu, s_omega)`.
pub fn surfaces(e: &ErrorState, d: &ErrorDerivatives, cfg: &TelcConfig) -> (f64, f64) {
    let l = cfg.lambda_omega;
    (
        d.e1_dot + cfg.lambda_nu * e.e1,
        d.e2_ddot + 2.0 * l * d.e2_dot + l * l * e.e2,
    )
}

/// One forward-Euler step of the four coefficient update laws.
pub fn telc_update(
    gains: &GainSet,
    e: &ErrorState,
    d: &ErrorDerivatives,
    nu_r: f64,
    omega_r: f64,
    cfg: &TelcConfig,
) -> GainSet {
    let (s_nu, s_omega) = surfaces(e, d, cfg);
    let dt = cfg.t_step;
    GainSet {
        k_nu_1: gains.k_nu_1 + dt * cfg.alpha_nu_1 * nu_r * s_nu,
        k_nu_0: gains.k_nu_0 + dt * cfg.alpha_nu_0 * s_nu,
        k_omega_1: gains.k_omega_1 + dt * cfg.alpha_omega_1 * nu_r * omega_r * s_omega,
        k_omega_0: gains.k_omega_0 + dt * cfg.alpha_omega_0 * nu_r * s_omega,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostValues {
    pub e_nu: f64,
    pub e_omega: f64,
    /// Lyapunov candidate `E_nu + E_omega`.
    pub v: f64,
}

pub fn cost_values(e: &ErrorState, d: &ErrorDerivatives, cfg: &TelcConfig) -> CostValues {
    let (s_nu, s_omega) = surfaces(e, d, cfg);
    let e_nu = 0.5 * s_nu * s_nu;
    let e_omega = 0.5 * s_omega * s_omega;
    CostValues {
        e_nu,
        e_omega,
        v: e_nu + e_omega,
    }
}

/// Curvatures of the learning costs along each coefficient, as
/// `(k_nu_1, k_nu_0, k_omega_1, k_omega_0)`. All are non-negative, so each
/// cost is convex along every coefficient.
pub fn curvature_check(nu_r: f64, omega_r: f64, cfg: &TelcConfig) -> [f64; 4] {
    let nu2 = nu_r * nu_r;
    [
        cfg.alpha_nu_1 * nu2,
        cfg.alpha_nu_0,
        cfg.alpha_omega_1 * nu2 * omega_r * omega_r,
        cfg.alpha_omega_0 * nu2,
    ]
}

/// First-order filtered finite differences of `e1`, `e2` and `e2_dot`.
#[derive(Debug, Clone, Default)]
pub struct NumericDerivatives {
    prev: Option<(f64, f64)>,
    prev_e2_dot: Option<f64>,
    state: ErrorDerivatives,
}

impl NumericDerivatives {
    pub fn update(&mut self, e: &ErrorState, t_step: f64, tau: f64) -> ErrorDerivatives {
        let blend = t_step / (tau + t_step);
        if let Some((e1, e2)) = self.prev {
            let raw1 = (e.e1 - e1) / t_step;
            let raw2 = (e.e2 - e2) / t_step;
            self.state.e1_dot += blend * (raw1 - self.state.e1_dot);
            self.state.e2_dot += blend * (raw2 - self.state.e2_dot);
            if let Some(prev_d2) = self.prev_e2_dot {
                let raw_dd = (self.state.e2_dot - prev_d2) / t_step;
                self.state.e2_ddot += blend * (raw_dd - self.state.e2_ddot);
            }
            self.prev_e2_dot = Some(self.state.e2_dot);
        }
        self.prev = Some((e.e1, e.e2));
        self.state
    }
}

/// What one learning step saw and produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningStep {
    pub derivatives: ErrorDerivatives,
    pub s_nu: f64,
    pub s_omega: f64,
    pub costs: CostValues,
    pub gains: GainSet,
}

/// Owns the evolving coefficients of one controller instance.
#[derive(Debug, Clone)]
pub struct TelcLearner {
    cfg: TelcConfig,
    gains: GainSet,
    numeric: NumericDerivatives,
}

impl TelcLearner {
    pub fn new(cfg: TelcConfig, initial: GainSet) -> Result<Self, TelcError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            gains: initial,
            numeric: NumericDerivatives::default(),
        })
    }

    pub fn gains(&self) -> GainSet {
        self.gains
    }

    pub fn config(&self) -> &TelcConfig {
        &self.cfg
    }

    pub fn feedforward(&self, nu_r: f64, omega_r: f64) -> VelocityCommand {
        feedforward(&self.gains, nu_r, omega_r)
    }

    /// Evaluates the derivatives and costs for the current step without
    /// touching the coefficients.
    pub fn observe(
        &mut self,
        e: &ErrorState,
        commanded: VelocityCommand,
        measured: VelocityCommand,
        nu_r: f64,
        omega_r: f64,
    ) -> LearningStep {
        let applied = match self.cfg.velocity_source {
            VelocitySource::Measured => measured,
            VelocitySource::Commanded => commanded,
        };
        let derivatives = match self.cfg.derivatives {
            DerivativeSource::Model => error_derivatives(e, applied.nu, applied.omega, nu_r, omega_r),
            DerivativeSource::FilteredNumeric => self.numeric.update(e, self.cfg.t_step, self.cfg.filter_tau),
        };
        let (s_nu, s_omega) = surfaces(e, &derivatives, &self.cfg);
        LearningStep {
            derivatives,
            s_nu,
            s_omega,
            costs: cost_values(e, &derivatives, &self.cfg),
            gains: self.gains,
        }
    }

    /// Observes and then applies one update step.
    pub fn learn(
        &mut self,
        e: &ErrorState,
        commanded: VelocityCommand,
        measured: VelocityCommand,
        nu_r: f64,
        omega_r: f64,
    ) -> LearningStep {
        let mut step = self.observe(e, commanded, measured, nu_r, omega_r);
        self.gains = telc_update(&self.gains, e, &step.derivatives, nu_r, omega_r, &self.cfg);
        step.gains = self.gains;
        step
    }
}

/// Windowed-mean check on the Lyapunov candidate `V`.
#[derive(Debug, Clone, Default)]
pub struct LyapunovMonitor {
    samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub window_means: Vec<f64>,
    /// Largest `mean[k + 1] / mean[k]` among windows above the noise floor.
    pub worst_growth: f64,
    pub nonincreasing: bool,
}

impl LyapunovMonitor {
    pub fn push(&mut self, t: f64, v: f64) {
        self.samples.push((t, v));
    }

    /// Splits the record after `warmup` seconds into consecutive windows of
    /// `window` seconds and checks that each mean is at most
    /// `(1 + tolerance)` times the previous one. Means below `floor` count as
    /// converged.
    pub fn report(&self, warmup: f64, window: f64, tolerance: f64, floor: f64) -> LyapunovReport {
        let mut window_means = Vec::new();
        let mut acc = (0.0, 0usize);
        let mut edge = warmup + window;
        for &(t, v) in self.samples.iter().filter(|(t, _)| *t >= warmup) {
            while t >= edge {
                if acc.1 > 0 {
                    window_means.push(acc.0 / acc.1 as f64);
                }
                acc = (0.0, 0);
                edge += window;
            }
            acc.0 += v;
            acc.1 += 1;
        }
        let mut worst_growth: f64 = 0.0;
        let mut nonincreasing = true;
        for pair in window_means.windows(2) {
            if pair[1] <= floor {
                continue;
            }
            let ratio = pair[1] / pair[0].max(floor);
            worst_growth = worst_growth.max(ratio);
            if ratio > 1.0 + tolerance {
                nonincreasing = false;
            }
        }
        LyapunovReport {
            window_means,
            worst_growth,
            nonincreasing,
        }
    }
}
