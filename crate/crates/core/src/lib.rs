//! Tracking-error learning control for differential-drive robots.
//!
//! The crate is organised around the closed loop it simulates:
//!
//! * [`path_reference`] builds reference trajectories and their controls,
//! * [`error_model`] holds the robot-frame error transform and its dynamics,
//! * [`mpc`] is the receding-horizon feedback controller (with [`qp`] as its
//!   box-constrained QP solver),
//! * [`telc`] adapts the feedforward coefficients online,
//! * [`estimation`] is the GNSS + odometry EKF,
//! * [`plant`] is the ground-truth robot with disturbances and sensors,
//! * [`harness`] wires everything together, runs scenarios and writes traces.

pub mod error_model;
pub mod estimation;
pub mod harness;
pub mod kinematics;
pub mod mpc;
pub mod path_reference;
pub mod plant;
pub mod qp;
pub mod telc;

pub use error_model::{ErrorInput, ErrorState};
pub use kinematics::{normalize_angle, Pose, VelocityCommand};
pub use path_reference::{PathSegment, ReferenceSample, ReferenceTrajectory};
