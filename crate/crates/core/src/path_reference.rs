//! Reference trajectories and the open-loop reference controls.
//!
//! Two ways in: [`build_trajectory`] integrates piecewise-constant
//! `(nu_r, omega_r)` segments (how the figure-eight is generated), and
//! [`reference_controls_from_curve`] recovers `(nu_r, theta_r, omega_r)` from a
//! tabulated planar curve.

use crate::kinematics::{integrate_constant_twist, normalize_angle, Pose};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("segment list is empty")]
    EmptySegmentList,
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("segment {index} has zero reference velocity")]
    ZeroReferenceVelocity { index: usize },
    #[error("segment {index} has non-positive duration {duration}")]
    NonPositiveDuration { index: usize, duration: f64 },
    #[error("curve speed vanishes at sample {index}")]
    DegenerateVelocity { index: usize },
    #[error("curve needs at least 4 samples, got {0}")]
    TooFewSamples(usize),
    #[error("x and y sample counts differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("time {t} outside trajectory range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
}

/// Constant-control piece of a reference path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSegment {
    pub duration_s: f64,
    pub nu_mps: f64,
    pub omega_radps: f64,
}

impl PathSegment {
    pub fn new(duration_s: f64, nu_mps: f64, omega_radps: f64) -> Self {
        Self {
            duration_s,
            nu_mps,
            omega_radps,
        }
    }
}

/// Desired driving direction. Reverse flips the sign of `nu_r` and adds `pi`
/// to the heading reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Forward,
    Reverse,
}

impl Direction {
    fn gamma(self) -> f64 {
        match self {
            Direction::Forward => 0.0,
            Direction::Reverse => 1.0,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Reverse => -1.0,
        }
    }

    fn of_velocity(nu: f64) -> Self {
        if nu < 0.0 {
            Direction::Reverse
        } else {
            Direction::Forward
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSample {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub nu: f64,
    pub omega: f64,
    pub direction: Direction,
}

impl ReferenceSample {
    pub fn pose(&self) -> Pose {
        Pose {
            x: self.x,
            y: self.y,
            theta: self.theta,
        }
    }
}

/// Uniformly sampled reference with zero-order-hold lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    samples: Vec<ReferenceSample>,
    t_start: f64,
    t_step: f64,
}

impl ReferenceTrajectory {
    pub fn from_samples(samples: Vec<ReferenceSample>, t_start: f64, t_step: f64) -> Result<Self, PathError> {
        if !(t_step > 0.0) {
            return Err(PathError::NonPositiveStep(t_step));
        }
        if samples.is_empty() {
            return Err(PathError::EmptySegmentList);
        }
        Ok(Self {
            samples,
            t_start,
            t_step,
        })
    }

    pub fn samples(&self) -> &[ReferenceSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_step(&self) -> f64 {
        self.t_step
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + (self.samples.len() - 1) as f64 * self.t_step
    }

    pub fn time_of(&self, index: usize) -> f64 {
        self.t_start + index as f64 * self.t_step
    }

    /// Sample by index, holding the last sample past the end.
    pub fn sample_clamped(&self, index: usize) -> &ReferenceSample {
        &self.samples[index.min(self.samples.len() - 1)]
    }

    /// Reference controls for steps `start .. start + len`, holding the final
    /// value once the trajectory runs out.
    pub fn control_horizon(&self, start: usize, len: usize) -> Vec<(f64, f64)> {
        (start..start + len)
            .map(|i| {
                let s = self.sample_clamped(i);
                (s.nu, s.omega)
            })
            .collect()
    }

    /// Zero-order-hold lookup.
    pub fn sample_at(&self, t: f64) -> Result<ReferenceSample, PathError> {
        let slack = 1e-9 * self.t_step;
        let end = self.t_end();
        if !(t >= self.t_start - slack && t <= end + slack) {
            return Err(PathError::OutOfRange {
                t,
                start: self.t_start,
                end,
            });
        }
        let raw = ((t - self.t_start) / self.t_step + 1e-9).floor().max(0.0) as usize;
        Ok(self.samples[raw.min(self.samples.len() - 1)])
    }
}

/// Number of whole steps needed to cover `duration`, tolerant to round-off
/// in `duration / t_step`.
pub(crate) fn steps_covering(duration: f64, t_step: f64) -> usize {
    let ratio = duration / t_step;
    let nearest = ratio.round();
    if (ratio - nearest).abs() < 1e-9 * ratio.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

fn validate_segments(segments: &[PathSegment]) -> Result<(), PathError> {
    if segments.is_empty() {
        return Err(PathError::EmptySegmentList);
    }
    for (index, s) in segments.iter().enumerate() {
        if !(s.duration_s > 0.0) {
            return Err(PathError::NonPositiveDuration {
                index,
                duration: s.duration_s,
            });
        }
        if s.nu_mps == 0.0 {
            return Err(PathError::ZeroReferenceVelocity { index });
        }
    }
    Ok(())
}

/// Exact pose of the piecewise-constant-twist path at time `t` after the
/// start. Times past the end extend the last segment.
pub fn pose_at_time(segments: &[PathSegment], initial_pose: Pose, t: f64) -> Result<Pose, PathError> {
    validate_segments(segments)?;
    let (mut x, mut y, mut th) = (initial_pose.x, initial_pose.y, initial_pose.theta);
    let mut elapsed = 0.0;
    for (i, s) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        let span = if last {
            t - elapsed
        } else {
            (t - elapsed).min(s.duration_s)
        };
        if span <= 0.0 {
            break;
        }
        (x, y, th) = integrate_constant_twist(x, y, th, s.nu_mps, s.omega_radps, span);
        elapsed += s.duration_s;
    }
    Ok(Pose::new(x, y, th))
}

/// Integrates the unicycle model through the segments and samples it every
/// `t_step`, starting at `t = 0`.
///
/// Each sample carries the controls of the segment active at its own time.
/// Steps that straddle a segment boundary are integrated exactly through the
/// boundary, so the samples always lie on the continuous path.
pub fn build_trajectory(
    segments: &[PathSegment],
    initial_pose: Pose,
    t_step: f64,
) -> Result<ReferenceTrajectory, PathError> {
    if !(t_step > 0.0) {
        return Err(PathError::NonPositiveStep(t_step));
    }
    validate_segments(segments)?;

    // segment start times and poses (heading kept unwrapped)
    let mut starts = Vec::with_capacity(segments.len());
    let (mut x, mut y, mut th) = (initial_pose.x, initial_pose.y, initial_pose.theta);
    let mut t0 = 0.0;
    for s in segments {
        starts.push((t0, x, y, th));
        (x, y, th) = integrate_constant_twist(x, y, th, s.nu_mps, s.omega_radps, s.duration_s);
        t0 += s.duration_s;
    }
    let total = t0;

    let n_steps = steps_covering(total, t_step);
    let mut samples = Vec::with_capacity(n_steps + 1);
    let mut seg = 0;
    for i in 0..=n_steps {
        let t = i as f64 * t_step;
        while seg + 1 < segments.len() && t >= starts[seg + 1].0 - 1e-9 * t_step {
            seg += 1;
        }
        let (ts, sx, sy, sth) = starts[seg];
        let s = &segments[seg];
        let (px, py, pth) = integrate_constant_twist(sx, sy, sth, s.nu_mps, s.omega_radps, t - ts);
        samples.push(ReferenceSample {
            x: px,
            y: py,
            theta: normalize_angle(pth),
            nu: s.nu_mps,
            omega: s.omega_radps,
            direction: Direction::of_velocity(s.nu_mps),
        });
    }
    ReferenceTrajectory::from_samples(samples, 0.0, t_step)
}

/// Total duration of a segment list.
pub fn total_duration(segments: &[PathSegment]) -> f64 {
    segments.iter().map(|s| s.duration_s).sum()
}

fn first_derivative(v: &[f64], i: usize, h: f64) -> f64 {
    let n = v.len();
    if i == 0 {
        (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    } else if i == n - 1 {
        (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h)
    } else {
        (v[i + 1] - v[i - 1]) / (2.0 * h)
    }
}

fn second_derivative(v: &[f64], i: usize, h: f64) -> f64 {
    let n = v.len();
    let h2 = h * h;
    if i == 0 {
        (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2
    } else if i == n - 1 {
        (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2
    } else {
        (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2
    }
}

/// Recovers reference controls from a tabulated planar curve.
///
/// Derivatives use second-order finite differences: central in the interior,
/// one-sided at the two ends.
pub fn reference_controls_from_curve(
    xs: &[f64],
    ys: &[f64],
    t_step: f64,
    direction: Direction,
) -> Result<Vec<ReferenceSample>, PathError> {
    if !(t_step > 0.0) {
        return Err(PathError::NonPositiveStep(t_step));
    }
    if xs.len() != ys.len() {
        return Err(PathError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 4 {
        return Err(PathError::TooFewSamples(xs.len()));
    }
    (0..xs.len())
        .map(|i| {
            let dx = first_derivative(xs, i, t_step);
            let dy = first_derivative(ys, i, t_step);
            let ddx = second_derivative(xs, i, t_step);
            let ddy = second_derivative(ys, i, t_step);
            let speed_sq = dx * dx + dy * dy;
            if speed_sq.sqrt() < 1e-9 {
                return Err(PathError::DegenerateVelocity { index: i });
            }
            Ok(ReferenceSample {
                x: xs[i],
                y: ys[i],
                theta: normalize_angle(dy.atan2(dx) + direction.gamma() * PI),
                nu: direction.sign() * speed_sq.sqrt(),
                omega: (dx * ddy - dy * ddx) / speed_sq,
                direction,
            })
        })
        .collect()
}
