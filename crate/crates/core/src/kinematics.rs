//! Planar poses, velocity commands and the unicycle model shared by every
//! other module.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Planar robot configuration in the inertial frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Linear and angular velocity pair. Used for feedback, feedforward and total
/// commands alike.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub nu: f64,
    pub omega: f64,
}

impl VelocityCommand {
    pub const ZERO: VelocityCommand = VelocityCommand { nu: 0.0, omega: 0.0 };

    pub fn new(nu: f64, omega: f64) -> Self {
        Self { nu, omega }
    }

    pub fn norm(&self) -> f64 {
        self.nu.hypot(self.omega)
    }
}

impl std::ops::Add for VelocityCommand {
    type Output = VelocityCommand;

    fn add(self, rhs: VelocityCommand) -> VelocityCommand {
        VelocityCommand::new(self.nu + rhs.nu, self.omega + rhs.omega)
    }
}

/// Continuous unicycle vector field `(nu cos theta, nu sin theta, omega)`.
pub fn unicycle_rate(theta: f64, nu: f64, omega: f64) -> [f64; 3] {
    [nu * theta.cos(), nu * theta.sin(), omega]
}

/// Exact solution of the unicycle model for a constant twist held over `dt`.
///
/// The heading is not wrapped so that callers chaining many steps can keep an
/// unwrapped angle; wrap with [`normalize_angle`] when storing a [`Pose`].
pub fn integrate_constant_twist(x: f64, y: f64, theta: f64, nu: f64, omega: f64, dt: f64) -> (f64, f64, f64) {
    let dtheta = omega * dt;
    // sin(d/2)/(d/2) is the chord shrink factor of an arc; series near zero.
    let half = 0.5 * dtheta;
    let sinc = if half.abs() < 1e-6 {
        1.0 - half * half / 6.0
    } else {
        half.sin() / half
    };
    let chord = nu * dt * sinc;
    let mid = theta + half;
    (x + chord * mid.cos(), y + chord * mid.sin(), theta + dtheta)
}
