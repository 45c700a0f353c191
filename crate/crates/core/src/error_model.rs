//! Robot-frame tracking error, its nonlinear and linearized dynamics, and
//! the time-varying state-space matrices used by the MPC.

use crate::kinematics::{normalize_angle, Pose};
use nalgebra::{Matrix3, Matrix3x2, Matrix3x6, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
}

/// Longitudinal (`e1`), lateral (`e2`) and heading (`e3`) error in the robot
/// frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorState {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
}

impl ErrorState {
    pub const ZERO: ErrorState = ErrorState {
        e1: 0.0,
        e2: 0.0,
        e3: 0.0,
    };

    pub fn new(e1: f64, e2: f64, e3: f64) -> Self {
        Self { e1, e2, e3 }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.e1, self.e2, self.e3)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }
}

/// Deviation of the applied controls from the reference controls:
/// `nu_e = nu - nu_r`, `omega_e = omega - omega_r`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorInput {
    pub nu_e: f64,
    pub omega_e: f64,
}

impl ErrorInput {
    pub const ZERO: ErrorInput = ErrorInput {
        nu_e: 0.0,
        omega_e: 0.0,
    };

    pub fn new(nu_e: f64, omega_e: f64) -> Self {
        Self { nu_e, omega_e }
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.nu_e, self.omega_e)
    }
}

/// `e = T(theta) (q_r - q)` with `theta` the robot's own heading. The heading
/// component is wrapped into `(-pi, pi]`.
pub fn error_state(reference: &Pose, actual: &Pose) -> ErrorState {
    let dx = reference.x - actual.x;
    let dy = reference.y - actual.y;
    let (s, c) = actual.theta.sin_cos();
    ErrorState {
        e1: c * dx + s * dy,
        e2: -s * dx + c * dy,
        e3: normalize_angle(reference.theta - actual.theta),
    }
}

/// Nonlinear tracking-error dynamics.
pub fn nonlinear_error_rate(e: &ErrorState, nu: f64, omega: f64, nu_r: f64, omega_r: f64) -> ErrorState {
    ErrorState {
        e1: omega * e.e2 - nu + nu_r * e.e3.cos(),
        e2: -omega * e.e1 + nu_r * e.e3.sin(),
        e3: omega_r - omega,
    }
}

/// `e_dot = A e + B u_e`, linearized about the reference path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearErrorModel {
    pub a: Matrix3<f64>,
    pub b: Matrix3x2<f64>,
}

pub fn input_matrix() -> Matrix3x2<f64> {
    Matrix3x2::new(-1.0, 0.0, 0.0, 0.0, 0.0, -1.0)
}

pub fn linearized_model(nu_r: f64, omega_r: f64) -> LinearErrorModel {
    #[rustfmt::skip]
    let a = Matrix3::new(
        0.0,      omega_r, 0.0,
        -omega_r, 0.0,     nu_r,
        0.0,      0.0,     0.0,
    );
    LinearErrorModel { a, b: input_matrix() }
}

impl LinearErrorModel {
    pub fn rate(&self, e: &ErrorState, u: &ErrorInput) -> ErrorState {
        ErrorState::from_vector(&(self.a * e.as_vector() + self.b * u.as_vector()))
    }

    /// `[B, AB, A^2 B]`.
    pub fn controllability_matrix(&self) -> Matrix3x6<f64> {
        let ab = self.a * self.b;
        let aab = self.a * ab;
        let mut c = Matrix3x6::zeros();
        c.fixed_view_mut::<3, 2>(0, 0).copy_from(&self.b);
        c.fixed_view_mut::<3, 2>(0, 2).copy_from(&ab);
        c.fixed_view_mut::<3, 2>(0, 4).copy_from(&aab);
        c
    }
}

const RANK_TOLERANCE: f64 = 1e-10;

/// Numerical rank test on the controllability matrix, with singular values
/// below `1e-10` times the largest one counted as zero.
pub fn is_controllable(model: &LinearErrorModel) -> bool {
    let sv = model.controllability_matrix().singular_values();
    let largest = sv.max();
    if largest <= 0.0 {
        return false;
    }
    sv.iter().filter(|s| **s > RANK_TOLERANCE * largest).count() == 3
}

/// Discrete-time pair `(A_d, B_d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteErrorModel {
    pub a: Matrix3<f64>,
    pub b: Matrix3x2<f64>,
}

impl DiscreteErrorModel {
    pub fn step(&self, e: &ErrorState, u: &ErrorInput) -> ErrorState {
        ErrorState::from_vector(&(self.a * e.as_vector() + self.b * u.as_vector()))
    }
}

/// Forward-Euler discretization `A_d = I + A dt`, `B_d = B dt`.
pub fn discretize(model: &LinearErrorModel, t_step: f64) -> Result<DiscreteErrorModel, ModelError> {
    if !(t_step > 0.0) {
        return Err(ModelError::NonPositiveStep(t_step));
    }
    Ok(DiscreteErrorModel {
        a: Matrix3::identity() + model.a * t_step,
        b: model.b * t_step,
    })
}
