//! Ground-truth differential-drive plant: actuator gain errors, spatial slip
//! patches, a first-order velocity loop, RK4 pose integration and seeded
//! sensor synthesis.

use crate::estimation::Measurement;
use crate::kinematics::{normalize_angle, unicycle_rate, Pose, VelocityCommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_WHEEL_BASE: f64 = 0.3;
const RK4_SUBSTEPS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("wheel base must be positive, got {0}")]
    NonPositiveWheelBase(f64),
    #[error("invalid disturbance configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub pose: Pose,
    pub nu_actual: f64,
    pub omega_actual: f64,
    /// Mean velocities over the most recent step, as counted by the wheel
    /// encoders and integrated by the gyro.
    pub nu_step_mean: f64,
    pub omega_step_mean: f64,
}

impl PlantState {
    pub fn at_rest(pose: Pose) -> Self {
        Self {
            pose,
            ..Self::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pose.is_finite()
            && self.nu_actual.is_finite()
            && self.omega_actual.is_finite()
            && self.nu_step_mean.is_finite()
            && self.omega_step_mean.is_finite()
    }
}

/// Rectangle in which the actuator gains are further multiplied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlipZone {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub gain_nu: f64,
    pub gain_omega: f64,
}

impl SlipZone {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }
}

/// Interval `[t_start, t_end)` without GNSS fixes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outage {
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceConfig {
    pub gain_nu: f64,
    pub gain_omega: f64,
    pub lag_tau: f64,
    pub slip_zones: Vec<SlipZone>,
    pub noise_gnss_sigma: f64,
    pub noise_nu_sigma: f64,
    pub noise_omega_sigma: f64,
    pub noise_heading_sigma: f64,
    pub gnss_outages: Vec<Outage>,
    /// Set from the scenario seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        Self {
            gain_nu: 1.0,
            gain_omega: 1.0,
            lag_tau: 0.15,
            slip_zones: Vec::new(),
            noise_gnss_sigma: 0.03,
            noise_nu_sigma: 0.01,
            noise_omega_sigma: 0.005,
            noise_heading_sigma: 0.01745,
            gnss_outages: Vec::new(),
            seed: 0,
        }
    }
}

impl DisturbanceConfig {
    /// Unit gains, no lag, no noise.
    pub fn ideal() -> Self {
        Self {
            lag_tau: 0.0,
            noise_gnss_sigma: 0.0,
            noise_nu_sigma: 0.0,
            noise_omega_sigma: 0.0,
            noise_heading_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let gains = std::iter::once((self.gain_nu, self.gain_omega))
            .chain(self.slip_zones.iter().map(|z| (z.gain_nu, z.gain_omega)));
        for (gn, go) in gains {
            if !(gn > 0.0 && go > 0.0 && gn.is_finite() && go.is_finite()) {
                return Err(PlantError::InvalidConfig("gains must be positive and finite".into()));
            }
        }
        if !(self.lag_tau >= 0.0) {
            return Err(PlantError::InvalidConfig("lag_tau must be non-negative".into()));
        }
        let sigmas = [
            self.noise_gnss_sigma,
            self.noise_nu_sigma,
            self.noise_omega_sigma,
            self.noise_heading_sigma,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(PlantError::InvalidConfig("noise sigmas must be non-negative".into()));
        }
        Ok(())
    }

    /// Global gains multiplied by those of every zone containing `(x, y)`.
    pub fn effective_gains(&self, x: f64, y: f64) -> (f64, f64) {
        self.slip_zones
            .iter()
            .filter(|z| z.contains(x, y))
            .fold((self.gain_nu, self.gain_omega), |(gn, go), z| {
                (gn * z.gain_nu, go * z.gain_omega)
            })
    }

    pub fn gnss_available(&self, t: f64) -> bool {
        !self.gnss_outages.iter().any(|o| t >= o.t_start && t < o.t_end)
    }
}

/// Advances the plant by one control period. Slip gains are taken at the
/// pose where the step starts.
pub fn plant_step(state: &PlantState, cmd: VelocityCommand, cfg: &DisturbanceConfig, t_step: f64) -> PlantState {
    let (gn, go) = cfg.effective_gains(state.pose.x, state.pose.y);
    let target_nu = gn * cmd.nu;
    let target_omega = go * cmd.omega;
    let (nu0, omega0) = (state.nu_actual, state.omega_actual);
    let tau = cfg.lag_tau;
    let velocity = |s: f64| -> (f64, f64) {
        if tau <= 0.0 {
            (target_nu, target_omega)
        } else {
            let decay = (-s / tau).exp();
            (
                target_nu + (nu0 - target_nu) * decay,
                target_omega + (omega0 - target_omega) * decay,
            )
        }
    };

    let h = t_step / RK4_SUBSTEPS as f64;
    let mut q = [state.pose.x, state.pose.y, state.pose.theta];
    for k in 0..RK4_SUBSTEPS {
        let s0 = k as f64 * h;
        let f = |q: &[f64; 3], s: f64| {
            let (nu, omega) = velocity(s);
            unicycle_rate(q[2], nu, omega)
        };
        let add = |q: &[f64; 3], d: &[f64; 3], a: f64| [q[0] + a * d[0], q[1] + a * d[1], q[2] + a * d[2]];
        let k1 = f(&q, s0);
        let k2 = f(&add(&q, &k1, 0.5 * h), s0 + 0.5 * h);
        let k3 = f(&add(&q, &k2, 0.5 * h), s0 + 0.5 * h);
        let k4 = f(&add(&q, &k3, h), s0 + h);
        for i in 0..3 {
            q[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let (nu_actual, omega_actual) = velocity(t_step);
    // closed-form average of the exponential approach over the step
    let settle = if tau <= 0.0 {
        0.0
    } else {
        tau / t_step * (1.0 - (-t_step / tau).exp())
    };
    PlantState {
        nu_step_mean: target_nu + (nu0 - target_nu) * settle,
        omega_step_mean: target_omega + (omega0 - target_omega) * settle,
        pose: Pose {
            x: q[0],
            y: q[1],
            theta: normalize_angle(q[2]),
        },
        nu_actual,
        omega_actual,
    }
}

/// What the sensors report at one control step. `truth` is carried for
/// logging and metrics; the controller side only sees [`SensorFrame::readings`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorFrame {
    pub gnss: Measurement,
    pub nu_meas: f64,
    pub omega_meas: f64,
    pub truth: PlantState,
}

/// The controller-visible part of a [`SensorFrame`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReadings {
    pub gnss: Measurement,
    pub nu_meas: f64,
    pub omega_meas: f64,
}

impl SensorFrame {
    pub fn readings(&self) -> SensorReadings {
        SensorReadings {
            gnss: self.gnss,
            nu_meas: self.nu_meas,
            omega_meas: self.omega_meas,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Channel {
    Gnss = 0,
    Nu = 1,
    Omega = 2,
    Heading = 3,
}

/// Words reserved per channel per step; far more than the draws needed.
const WORDS_PER_STEP: u128 = 64;

/// Independent, random-access Gaussian streams keyed by (seed, channel, step).
#[derive(Debug, Clone)]
pub struct SensorNoise {
    seed: u64,
}

impl SensorNoise {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn draws<const N: usize>(&self, channel: Channel, step: u64) -> [f64; N] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(channel as u64);
        rng.set_word_pos(step as u128 * WORDS_PER_STEP);
        std::array::from_fn(|_| StandardNormal.sample(&mut rng))
    }
}

/// Samples every sensor for control step `step` at time `t`. Same seed and
/// step always give the same frame. Odometry reports the mean velocity over
/// the step that just ended.
pub fn sense(state: &PlantState, cfg: &DisturbanceConfig, noise: &SensorNoise, step: u64, t: f64) -> SensorFrame {
    let [gx, gy] = noise.draws::<2>(Channel::Gnss, step);
    let [nn] = noise.draws::<1>(Channel::Nu, step);
    let [no] = noise.draws::<1>(Channel::Omega, step);
    let [nh] = noise.draws::<1>(Channel::Heading, step);
    let gnss = Measurement {
        x_gnss: state.pose.x + cfg.noise_gnss_sigma * gx,
        y_gnss: state.pose.y + cfg.noise_gnss_sigma * gy,
        valid: cfg.gnss_available(t),
        heading: Some(normalize_angle(state.pose.theta + cfg.noise_heading_sigma * nh)),
    };
    SensorFrame {
        gnss,
        nu_meas: state.nu_step_mean + cfg.noise_nu_sigma * nn,
        omega_meas: state.omega_step_mean + cfg.noise_omega_sigma * no,
        truth: *state,
    }
}

/// Left and right wheel speeds under the mixing `nu = (l + r) / 2`,
/// `omega = (l - r) / L`.
pub fn wheel_speeds(cmd: VelocityCommand, wheel_base: f64) -> Result<(f64, f64), PlantError> {
    if !(wheel_base > 0.0) {
        return Err(PlantError::NonPositiveWheelBase(wheel_base));
    }
    let half = 0.5 * cmd.omega * wheel_base;
    Ok((cmd.nu + half, cmd.nu - half))
}

pub fn mix_wheel_speeds(left: f64, right: f64, wheel_base: f64) -> Result<VelocityCommand, PlantError> {
    if !(wheel_base > 0.0) {
        return Err(PlantError::NonPositiveWheelBase(wheel_base));
    }
    Ok(VelocityCommand::new(0.5 * (left + right), (left - right) / wheel_base))
}
