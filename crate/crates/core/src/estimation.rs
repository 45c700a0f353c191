//! Extended Kalman filter over the discrete unicycle model, fusing GNSS
//! position fixes with encoder / gyro velocities used as motion inputs.

use crate::kinematics::{normalize_angle, Pose};
use nalgebra::{Matrix2, Matrix3, SMatrix, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EkfError {
    #[error("covariance lost positive semi-definiteness (min eigenvalue {0})")]
    NonPsdCovariance(f64),
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
}

/// Discretization of the unicycle model used for prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionModel {
    /// `x += T nu cos(theta)`: heading taken at the start of the step.
    Euler,
    /// `x += T nu cos(theta + T omega / 2)`: heading at mid-step, second order.
    #[default]
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfConfig {
    pub motion_model: MotionModel,
    /// Diagonal of the per-step process covariance `W`.
    pub process_noise: [f64; 3],
    /// Diagonal of the GNSS position covariance `V`.
    pub gnss_variance: [f64; 2],
    /// Fuse a direct heading measurement when the sensor frame carries one.
    pub heading_measurement: bool,
    pub heading_variance: f64,
    /// Diagonal of the initial covariance.
    pub initial_covariance: [f64; 3],
    /// Offset of the initial estimate from the true initial pose.
    pub initial_offset: Pose,
    #[serde(skip, default = "crate::mpc::default_t_step")]
    pub t_step: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            motion_model: MotionModel::Midpoint,
            process_noise: [1e-5, 1e-5, 1e-6],
            gnss_variance: [0.03 * 0.03, 0.03 * 0.03],
            heading_measurement: false,
            heading_variance: 0.01745 * 0.01745,
            initial_covariance: [0.1, 0.1, 0.1],
            initial_offset: Pose::default(),
            t_step: 0.2,
        }
    }
}

impl EkfConfig {
    /// `W = diag(0.1, 0.1, 0.1)` and `V = diag(0.03, 0.03)` taken literally
    /// as covariances.
    pub fn literal_diagonals() -> Self {
        Self {
            process_noise: [0.1, 0.1, 0.1],
            gnss_variance: [0.03, 0.03],
            heading_variance: 0.01745,
            ..Self::default()
        }
    }

    pub fn w(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.process_noise))
    }

    pub fn v(&self) -> Matrix2<f64> {
        Matrix2::from_diagonal(&Vector2::from(self.gnss_variance))
    }

    pub fn validate(&self) -> Result<(), EkfError> {
        let all = self
            .process_noise
            .iter()
            .chain(self.gnss_variance.iter())
            .chain(self.initial_covariance.iter())
            .chain(std::iter::once(&self.heading_variance));
        for v in all {
            if !(*v >= 0.0) {
                return Err(EkfError::InvalidConfig(
                    "covariance entries must be non-negative".into(),
                ));
            }
        }
        if !(self.t_step > 0.0) {
            return Err(EkfError::InvalidConfig("t_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Measurement {
    pub x_gnss: f64,
    pub y_gnss: f64,
    pub valid: bool,
    pub heading: Option<f64>,
}

impl Measurement {
    pub fn position(x: f64, y: f64) -> Self {
        Self {
            x_gnss: x,
            y_gnss: y,
            valid: true,
            heading: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState {
    pub mean: Pose,
    pub covariance: Matrix3<f64>,
}

impl EkfState {
    pub fn new(mean: Pose, covariance: Matrix3<f64>) -> Self {
        Self { mean, covariance }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.covariance.symmetric_eigenvalues().min()
    }

    pub fn asymmetry(&self) -> f64 {
        (self.covariance - self.covariance.transpose()).abs().max()
    }

    /// Normalized estimation error squared of the position block.
    pub fn position_nees(&self, truth: &Pose) -> f64 {
        let d = Vector2::new(truth.x - self.mean.x, truth.y - self.mean.y);
        let p = self.covariance.fixed_view::<2, 2>(0, 0).into_owned();
        match p.try_inverse() {
            Some(inv) => d.dot(&(inv * d)),
            None => f64::INFINITY,
        }
    }
}

/// Jacobian of the discrete motion model with respect to `(x, y, theta)`,
/// with `theta` the heading along which the step is taken.
pub fn motion_jacobian(theta: f64, nu: f64, t_step: f64) -> Matrix3<f64> {
    #[rustfmt::skip]
    let f = Matrix3::new(
        1.0, 0.0, -t_step * nu * theta.sin(),
        0.0, 1.0,  t_step * nu * theta.cos(),
        0.0, 0.0,  1.0,
    );
    f
}

fn symmetrize(p: Matrix3<f64>) -> Matrix3<f64> {
    (p + p.transpose()) * 0.5
}

pub fn ekf_predict(state: &EkfState, nu: f64, omega: f64, cfg: &EkfConfig) -> EkfState {
    let dt = cfg.t_step;
    let Pose { x, y, theta } = state.mean;
    let along = match cfg.motion_model {
        MotionModel::Euler => theta,
        MotionModel::Midpoint => theta + 0.5 * dt * omega,
    };
    let mean = Pose {
        x: x + dt * nu * along.cos(),
        y: y + dt * nu * along.sin(),
        theta: normalize_angle(theta + dt * omega),
    };
    let f = motion_jacobian(along, nu, dt);
    let covariance = symmetrize(f * state.covariance * f.transpose() + cfg.w());
    EkfState { mean, covariance }
}

fn correct<const M: usize>(
    state: &EkfState,
    h: SMatrix<f64, M, 3>,
    innovation: SVector<f64, M>,
    r: SMatrix<f64, M, M>,
) -> Result<EkfState, EkfError> {
    let p = state.covariance;
    let s = h * p * h.transpose() + r;
    let s_inv = s.try_inverse().ok_or(EkfError::SingularInnovation)?;
    let k = p * h.transpose() * s_inv;
    let dx = k * innovation;
    let mean = Pose {
        x: state.mean.x + dx[0],
        y: state.mean.y + dx[1],
        theta: normalize_angle(state.mean.theta + dx[2]),
    };
    // Joseph form
    let i_kh = Matrix3::identity() - k * h;
    let covariance = symmetrize(i_kh * p * i_kh.transpose() + k * r * k.transpose());
    let out = EkfState { mean, covariance };
    let min_eig = out.min_eigenvalue();
    if min_eig < -1e-10 {
        return Err(EkfError::NonPsdCovariance(min_eig));
    }
    Ok(out)
}

/// GNSS correction with `h(q) = (x, y)`, plus heading when enabled and
/// present. Invalid measurements leave the prior untouched.
pub fn ekf_update(state: &EkfState, z: &Measurement, cfg: &EkfConfig) -> Result<EkfState, EkfError> {
    if !z.valid {
        return Ok(*state);
    }
    let innovation_xy = Vector2::new(z.x_gnss - state.mean.x, z.y_gnss - state.mean.y);
    match (cfg.heading_measurement, z.heading) {
        (true, Some(heading)) => {
            #[rustfmt::skip]
            let h = SMatrix::<f64, 3, 3>::identity();
            let innovation = Vector3::new(
                innovation_xy[0],
                innovation_xy[1],
                normalize_angle(heading - state.mean.theta),
            );
            let r = Matrix3::from_diagonal(&Vector3::new(
                cfg.gnss_variance[0],
                cfg.gnss_variance[1],
                cfg.heading_variance,
            ));
            correct(state, h, innovation, r)
        }
        _ => {
            let h = SMatrix::<f64, 2, 3>::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
            correct(state, h, innovation_xy, cfg.v())
        }
    }
}

/// Filter instance owning its configuration and current estimate.
#[derive(Debug, Clone)]
pub struct Ekf {
    cfg: EkfConfig,
    state: EkfState,
}

impl Ekf {
    /// Starts at `true_initial` shifted by the configured offset.
    pub fn new(cfg: EkfConfig, true_initial: Pose) -> Result<Self, EkfError> {
        cfg.validate()?;
        let off = cfg.initial_offset;
        let mean = Pose::new(
            true_initial.x + off.x,
            true_initial.y + off.y,
            true_initial.theta + off.theta,
        );
        let covariance = Matrix3::from_diagonal(&Vector3::from(cfg.initial_covariance));
        Ok(Self {
            state: EkfState { mean, covariance },
            cfg,
        })
    }

    pub fn state(&self) -> &EkfState {
        &self.state
    }

    pub fn predict(&mut self, nu: f64, omega: f64) {
        self.state = ekf_predict(&self.state, nu, omega, &self.cfg);
    }

    pub fn update(&mut self, z: &Measurement) -> Result<(), EkfError> {
        self.state = ekf_update(&self.state, z, &self.cfg)?;
        Ok(())
    }
}

/// One step of a closed-loop record, as needed by the heading probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingSample {
    pub t: f64,
    pub true_theta: f64,
    pub est_theta: f64,
    pub theta_variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeadingReport {
    pub rms_heading_error: f64,
    pub exceeds_bound: bool,
    /// Heading variance grew at every step of the evaluated window: the motion
    /// carried no heading information.
    pub unobservable: bool,
    pub samples: usize,
}

pub const HEADING_RMS_BOUND: f64 = 0.05;
pub const HEADING_SETTLE_TIME: f64 = 20.0;

/// RMS heading error after `settle_time`, with a flag when it exceeds
/// `bound` and a flag when the filter's heading variance never shrank.
pub fn heading_observability_probe(trace: &[HeadingSample], settle_time: f64, bound: f64) -> HeadingReport {
    let window: Vec<&HeadingSample> = trace.iter().filter(|s| s.t >= settle_time).collect();
    let n = window.len();
    if n == 0 {
        return HeadingReport {
            rms_heading_error: 0.0,
            exceeds_bound: false,
            unobservable: false,
            samples: 0,
        };
    }
    let sq: f64 = window
        .iter()
        .map(|s| normalize_angle(s.est_theta - s.true_theta).powi(2))
        .sum();
    let rms = (sq / n as f64).sqrt();
    let growing = window.windows(2).all(|p| p[1].theta_variance > p[0].theta_variance);
    HeadingReport {
        rms_heading_error: rms,
        exceeds_bound: rms > bound,
        unobservable: n > 1 && growing,
        samples: n,
    }
}
