//! Small dense convex QP with two-sided constraints on an invertible linear
//! map of the decision variable:
//!
//! ```text
//! minimize    0.5 x' H x + g' x
//! subject to  lower <= C x <= upper
//! ```
//!
//! Substituting `w = C x` turns the constraints into a box, which a primal
//! active-set method solves exactly in a finite number of face changes.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("constraint map is singular")]
    SingularConstraintMap,
    #[error("empty feasible set: lower[{index}] = {lower} > upper[{index}] = {upper}")]
    Infeasible { index: usize, lower: f64, upper: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundState {
    Free,
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub status: QpStatus,
    /// Projected-gradient residual in the box coordinates.
    pub kkt_residual: f64,
    pub max_violation: f64,
    /// Which side of its bound each row of `C x` ended on.
    pub bounds: Vec<BoundState>,
}

impl QpSolution {
    pub fn active_count(&self) -> usize {
        self.bounds.iter().filter(|b| **b != BoundState::Free).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 500,
        }
    }
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let cx = &self.c * x;
        (0..cx.len())
            .map(|i| (self.lower[i] - cx[i]).max(cx[i] - self.upper[i]).max(0.0))
            .fold(0.0, f64::max)
    }

    fn check(&self) -> Result<(), QpError> {
        let n = self.dim();
        let shapes_ok =
            self.h.shape() == (n, n) && self.c.shape() == (n, n) && self.lower.len() == n && self.upper.len() == n;
        if !shapes_ok {
            return Err(QpError::DimensionMismatch(format!(
                "H {:?}, g {}, C {:?}, lower {}, upper {}",
                self.h.shape(),
                n,
                self.c.shape(),
                self.lower.len(),
                self.upper.len()
            )));
        }
        for i in 0..n {
            if self.lower[i] > self.upper[i] {
                return Err(QpError::Infeasible {
                    index: i,
                    lower: self.lower[i],
                    upper: self.upper[i],
                });
            }
        }
        Ok(())
    }
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

/// Solves the reduced Newton system on the free set, regularizing when the
/// free block is only semidefinite.
fn free_newton_step(hw: &DMatrix<f64>, grad: &DVector<f64>, free: &[usize]) -> DVector<f64> {
    let k = free.len();
    let mut hff = DMatrix::from_fn(k, k, |i, j| hw[(free[i], free[j])]);
    let rhs = DVector::from_fn(k, |i, _| -grad[free[i]]);
    if let Some(ch) = hff.clone().cholesky() {
        return ch.solve(&rhs);
    }
    let scale = (0..k).map(|i| hff[(i, i)].abs()).fold(1e-300, f64::max);
    let mut eps = 1e-12 * scale;
    loop {
        for i in 0..k {
            hff[(i, i)] += eps;
        }
        if let Some(ch) = hff.clone().cholesky() {
            return ch.solve(&rhs);
        }
        eps *= 10.0;
    }
}

/// Solves the problem to the given tolerance with default iteration limits.
pub fn solve_qp(problem: &QpProblem, tolerance: f64) -> Result<QpSolution, QpError> {
    solve_qp_with(
        problem,
        QpSettings {
            tolerance,
            ..QpSettings::default()
        },
    )
}

pub fn solve_qp_with(problem: &QpProblem, settings: QpSettings) -> Result<QpSolution, QpError> {
    problem.check()?;
    let n = problem.dim();
    let c_inv = problem.c.clone().try_inverse().ok_or(QpError::SingularConstraintMap)?;
    let hw = c_inv.transpose() * &problem.h * &c_inv;
    let hw = (&hw + hw.transpose()) * 0.5;
    let gw = c_inv.transpose() * &problem.g;
    let (lo, hi) = (&problem.lower, &problem.upper);

    // start from x = 0 projected into the box
    let mut w = DVector::from_fn(n, |i, _| clamp(0.0, lo[i], hi[i]));
    let mut state: Vec<BoundState> = (0..n)
        .map(|i| {
            if lo[i] == hi[i] {
                BoundState::Lower
            } else {
                BoundState::Free
            }
        })
        .collect();

    let mut iterations = 0;
    let mut status = QpStatus::MaxIterations;
    while iterations < settings.max_iterations {
        iterations += 1;
        let grad = &hw * &w + &gw;
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == BoundState::Free).collect();

        if !free.is_empty() {
            let d = free_newton_step(&hw, &grad, &free);
            let mut alpha = 1.0;
            let mut blocking: Option<(usize, BoundState)> = None;
            for (k, &i) in free.iter().enumerate() {
                let di = d[k];
                if di > 0.0 && w[i] + di > hi[i] {
                    let a = (hi[i] - w[i]) / di;
                    if a < alpha {
                        alpha = a;
                        blocking = Some((i, BoundState::Upper));
                    }
                } else if di < 0.0 && w[i] + di < lo[i] {
                    let a = (lo[i] - w[i]) / di;
                    if a < alpha {
                        alpha = a;
                        blocking = Some((i, BoundState::Lower));
                    }
                }
            }
            for (k, &i) in free.iter().enumerate() {
                w[i] = clamp(w[i] + alpha * d[k], lo[i], hi[i]);
            }
            if let Some((i, side)) = blocking {
                w[i] = if side == BoundState::Upper { hi[i] } else { lo[i] };
                state[i] = side;
                continue;
            }
        }

        // minimizer on the current face: release the worst wrong-signed bound
        let grad = &hw * &w + &gw;
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..n {
            let pull = match state[i] {
                BoundState::Lower if lo[i] < hi[i] => -grad[i],
                BoundState::Upper if lo[i] < hi[i] => grad[i],
                _ => 0.0,
            };
            if pull > settings.tolerance && worst.is_none_or(|(_, p)| pull > p) {
                worst = Some((i, pull));
            }
        }
        match worst {
            Some((i, _)) => state[i] = BoundState::Free,
            None => {
                status = QpStatus::Converged;
                break;
            }
        }
    }

    let grad = &hw * &w + &gw;
    let kkt_residual = (0..n)
        .map(|i| (w[i] - clamp(w[i] - grad[i], lo[i], hi[i])).abs())
        .fold(0.0, f64::max);
    let bounds = (0..n)
        .map(|i| {
            if w[i] <= lo[i] {
                BoundState::Lower
            } else if w[i] >= hi[i] {
                BoundState::Upper
            } else {
                BoundState::Free
            }
        })
        .collect();
    let x = &c_inv * &w;
    Ok(QpSolution {
        objective: problem.objective(&x),
        max_violation: problem.violation(&x),
        x,
        iterations,
        status,
        kkt_residual,
        bounds,
    })
}
