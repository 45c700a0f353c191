//! Receding-horizon feedback on the linearized tracking-error model.
//!
//! The decision variable is the stack of input increments
//! `dU = [du_1, ..., du_nc]`; inputs after the control horizon hold the last
//! value. The box on `u_e` applies to the running input
//! `last_u_e + du_1 + ... + du_i`, so the QP constraint map is a block
//! lower-triangular summation matrix.

use crate::error_model::{discretize, linearized_model, DiscreteErrorModel, ErrorInput, ErrorState};
use crate::qp::{solve_qp_with, BoundState, QpError, QpProblem, QpSettings, QpStatus};
use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("invalid MPC configuration: {0}")]
    InvalidConfig(String),
    #[error("reference horizon has {got} entries, need {need}")]
    DimensionMismatch { got: usize, need: usize },
    #[error("previous error input ({nu_e}, {omega_e}) violates the input bounds")]
    StateInvariant { nu_e: f64, omega_e: f64 },
    #[error(transparent)]
    Qp(#[from] QpError),
}

pub(crate) fn default_t_step() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub n_p: usize,
    pub n_c: usize,
    #[serde(skip, default = "default_t_step")]
    pub t_step: f64,
    pub q_weights: [f64; 3],
    pub r_weights: [f64; 2],
    pub nu_e_bound: f64,
    pub omega_e_bound: f64,
    /// Use the current reference controls for the whole horizon instead of
    /// the per-step lookahead.
    pub frozen_model: bool,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            n_p: 20,
            n_c: 5,
            t_step: default_t_step(),
            q_weights: [1.0, 1.0, 1.0],
            r_weights: [1.0, 1.0],
            nu_e_bound: 0.1,
            omega_e_bound: 0.1,
            frozen_model: false,
            tolerance: 1e-8,
            max_iterations: 500,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), MpcError> {
        let fail = |m: &str| Err(MpcError::InvalidConfig(m.to_string()));
        if self.n_c < 1 || self.n_c > self.n_p {
            return fail("need 1 <= n_c <= n_p");
        }
        if !(self.t_step > 0.0) {
            return fail("t_step must be positive");
        }
        if !(self.nu_e_bound > 0.0 && self.omega_e_bound > 0.0) {
            return fail("input bounds must be positive");
        }
        if self.q_weights.iter().chain(self.r_weights.iter()).any(|w| !(*w >= 0.0)) {
            return fail("weights must be non-negative");
        }
        if self.q_weights.iter().all(|w| *w == 0.0) {
            return fail("state weights must not all be zero");
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return fail("solver tolerance and iteration limit must be positive");
        }
        Ok(())
    }

    fn bounds(&self) -> [f64; 2] {
        [self.nu_e_bound, self.omega_e_bound]
    }

    pub fn clamp_input(&self, u: ErrorInput) -> ErrorInput {
        ErrorInput::new(
            u.nu_e.clamp(-self.nu_e_bound, self.nu_e_bound),
            u.omega_e.clamp(-self.omega_e_bound, self.omega_e_bound),
        )
    }

    pub fn within_bounds(&self, u: &ErrorInput) -> bool {
        u.nu_e.abs() <= self.nu_e_bound && u.omega_e.abs() <= self.omega_e_bound
    }
}

/// Previously applied error input.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MpcState {
    pub last_u_e: ErrorInput,
}

/// Condensed QP plus what is needed to report the predicted cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedMpc {
    pub qp: QpProblem,
    /// Stacked predicted errors with `dU = 0`.
    pub free_response: DVector<f64>,
    /// `d(errors) / d(dU)`.
    pub prediction: DMatrix<f64>,
    /// `0.5 * free' Q free`; add to the QP objective for the full cost.
    pub constant: f64,
}

impl CondensedMpc {
    pub fn predicted_cost(&self, du: &DVector<f64>) -> f64 {
        self.qp.objective(du) + self.constant
    }
}

fn horizon_models(ref_horizon: &[(f64, f64)], cfg: &MpcConfig) -> Result<Vec<DiscreteErrorModel>, MpcError> {
    (0..cfg.n_p)
        .map(|i| {
            let (nu_r, omega_r) = if cfg.frozen_model {
                ref_horizon[0]
            } else {
                ref_horizon[i]
            };
            discretize(&linearized_model(nu_r, omega_r), cfg.t_step).map_err(|e| MpcError::InvalidConfig(e.to_string()))
        })
        .collect()
}

/// Builds the condensed QP for the current error estimate.
pub fn condense(
    e_hat: &ErrorState,
    ref_horizon: &[(f64, f64)],
    cfg: &MpcConfig,
    last_u_e: &ErrorInput,
) -> Result<CondensedMpc, MpcError> {
    cfg.validate()?;
    if ref_horizon.len() < cfg.n_p {
        return Err(MpcError::DimensionMismatch {
            got: ref_horizon.len(),
            need: cfg.n_p,
        });
    }
    let (n_p, n_c) = (cfg.n_p, cfg.n_c);
    let nu = 2 * n_c;
    let models = horizon_models(ref_horizon, cfg)?;

    let mut phi = DMatrix::<f64>::zeros(3 * n_p, nu);
    let mut free = DVector::<f64>::zeros(3 * n_p);

    let mut psi_e = e_hat.as_vector();
    let last = last_u_e.as_vector();
    let mut gamma_last = nalgebra::Vector3::zeros();
    let mut phi_i = nalgebra::OMatrix::<f64, nalgebra::U3, nalgebra::Dyn>::zeros(nu);
    for (i, m) in models.iter().enumerate() {
        let a: &Matrix3<f64> = &m.a;
        let b: &Matrix3x2<f64> = &m.b;
        psi_e = a * psi_e;
        gamma_last = a * gamma_last + b * last;
        phi_i = a * &phi_i;
        // every increment up to min(i + 1, n_c) contributes to u_{i+1}
        for j in 0..(i + 1).min(n_c) {
            let mut blk = phi_i.columns_mut(2 * j, 2);
            blk += b;
        }
        free.fixed_rows_mut::<3>(3 * i).copy_from(&(psi_e + gamma_last));
        phi.view_mut((3 * i, 0), (3, nu)).copy_from(&phi_i);
    }

    let q_bar = DVector::from_fn(3 * n_p, |r, _| cfg.q_weights[r % 3]);
    let r_bar = DVector::from_fn(nu, |r, _| cfg.r_weights[r % 2]);

    let q_phi = DMatrix::from_fn(3 * n_p, nu, |r, c| q_bar[r] * phi[(r, c)]);
    let mut h = phi.transpose() * &q_phi;
    for k in 0..nu {
        h[(k, k)] += r_bar[k];
    }
    let h = (&h + h.transpose()) * 0.5;
    let q_free = free.component_mul(&q_bar);
    let g = phi.transpose() * &q_free;
    let constant = 0.5 * free.dot(&q_free);

    let c = DMatrix::from_fn(nu, nu, |r, col| if r % 2 == col % 2 && col <= r { 1.0 } else { 0.0 });
    let bounds = cfg.bounds();
    let lower = DVector::from_fn(nu, |r, _| -bounds[r % 2] - last[r % 2]);
    let upper = DVector::from_fn(nu, |r, _| bounds[r % 2] - last[r % 2]);

    Ok(CondensedMpc {
        qp: QpProblem { h, g, c, lower, upper },
        free_response: free,
        prediction: phi,
        constant,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcDiagnostics {
    pub predicted_cost: f64,
    pub qp_iters: usize,
    pub active_constraints: usize,
    pub kkt_residual: f64,
    pub status: QpStatus,
    /// Optimal increment sequence.
    pub increments: DVector<f64>,
}

/// One receding-horizon step: returns the feedback action `u_b` (the new
/// error input), the updated state and solver diagnostics.
pub fn mpc_step(
    e_hat: &ErrorState,
    ref_horizon: &[(f64, f64)],
    cfg: &MpcConfig,
    state: &MpcState,
) -> Result<(ErrorInput, MpcState, MpcDiagnostics), MpcError> {
    let last = state.last_u_e;
    if !cfg.within_bounds(&last) {
        return Err(MpcError::StateInvariant {
            nu_e: last.nu_e,
            omega_e: last.omega_e,
        });
    }
    let condensed = condense(e_hat, ref_horizon, cfg, &last)?;
    let sol = solve_qp_with(
        &condensed.qp,
        QpSettings {
            tolerance: cfg.tolerance,
            max_iterations: cfg.max_iterations,
        },
    )?;
    let u_b = cfg.clamp_input(ErrorInput::new(last.nu_e + sol.x[0], last.omega_e + sol.x[1]));
    let diagnostics = MpcDiagnostics {
        predicted_cost: condensed.predicted_cost(&sol.x),
        qp_iters: sol.iterations,
        active_constraints: sol.bounds.iter().filter(|b| **b != BoundState::Free).count(),
        kkt_residual: sol.kkt_residual,
        status: sol.status,
        increments: sol.x,
    };
    Ok((u_b, MpcState { last_u_e: u_b }, diagnostics))
}

/// Stateful wrapper around [`mpc_step`]. One instance per control loop.
#[derive(Debug, Clone)]
pub struct MpcController {
    cfg: MpcConfig,
    state: MpcState,
}

impl MpcController {
    pub fn new(cfg: MpcConfig) -> Result<Self, MpcError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state: MpcState::default(),
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn state(&self) -> &MpcState {
        &self.state
    }

    pub fn step(
        &mut self,
        e_hat: &ErrorState,
        ref_horizon: &[(f64, f64)],
    ) -> Result<(ErrorInput, MpcDiagnostics), MpcError> {
        let (u_b, next, diag) = mpc_step(e_hat, ref_horizon, &self.cfg, &self.state)?;
        self.state = next;
        Ok((u_b, diag))
    }
}
