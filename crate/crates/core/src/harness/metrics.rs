use super::config::ControllerMode;
use super::trace::TraceRow;
use crate::estimation::{heading_observability_probe, HeadingSample, HEADING_RMS_BOUND, HEADING_SETTLE_TIME};
use crate::kinematics::Pose;
use crate::path_reference::ReferenceSample;
use crate::telc::GainSet;
use serde::{Deserialize, Serialize};

/// Planar distance between the robot and the time-matched reference point.
pub fn euclidean_error(truth: &Pose, reference: &ReferenceSample) -> f64 {
    (reference.x - truth.x).hypot(reference.y - truth.y)
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let m = mean(values.iter().copied());
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    (m, var.sqrt())
}

/// Per-step quantities that are not part of the CSV trace.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDiagnostics {
    pub predicted_cost: f64,
    pub qp_iters: usize,
    pub active_constraints: usize,
    pub s_nu: f64,
    pub s_omega: f64,
    pub position_nees: f64,
    pub covariance_trace: f64,
    pub theta_variance: f64,
    pub gnss_error: Option<f64>,
    pub kkt_residual: f64,
    pub qp_iteration_limit: bool,
    pub constraint_violated: bool,
    pub covariance_min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub controller: ControllerMode,
    pub seed: u64,
    pub steps: usize,
    pub mean_euclidean_error: f64,
    pub max_euclidean_error: f64,
    /// Same metric measured against raw GNSS fixes instead of truth.
    pub mean_gnss_euclidean_error: f64,
    pub rms_heading_error: f64,
    pub heading_unobservable: bool,
    pub mean_abs_feedback: [f64; 2],
    pub max_abs_feedforward: [f64; 2],
    /// Mean `|nu_b|`, `|omega_b|` over the first and last fifth of the run.
    pub mean_abs_feedback_first_fifth: [f64; 2],
    pub mean_abs_feedback_last_fifth: [f64; 2],
    pub final_gains: GainSet,
    pub constraint_violations: usize,
    pub mean_position_nees: f64,
    pub min_covariance_eigenvalue: f64,
    pub max_kkt_residual: f64,
    pub qp_iteration_limit_hits: usize,
}

fn mean_abs_feedback(rows: &[TraceRow]) -> [f64; 2] {
    [
        mean(rows.iter().map(|r| r.nu_b.abs())),
        mean(rows.iter().map(|r| r.omega_b.abs())),
    ]
}

pub fn summarize(
    scenario: &str,
    controller: ControllerMode,
    seed: u64,
    trace: &[TraceRow],
    diagnostics: &[StepDiagnostics],
    final_gains: GainSet,
) -> RunSummary {
    let n = trace.len();
    let fifth = (n / 5).max(1).min(n);
    let heading: Vec<HeadingSample> = trace
        .iter()
        .zip(diagnostics)
        .map(|(r, d)| HeadingSample {
            t: r.t,
            true_theta: r.true_theta,
            est_theta: r.est_theta,
            theta_variance: d.theta_variance,
        })
        .collect();
    let probe = heading_observability_probe(&heading, HEADING_SETTLE_TIME, HEADING_RMS_BOUND);
    RunSummary {
        scenario: scenario.to_string(),
        controller,
        seed,
        steps: n,
        mean_euclidean_error: mean(trace.iter().map(|r| r.euclid_err)),
        max_euclidean_error: trace.iter().map(|r| r.euclid_err).fold(0.0, f64::max),
        mean_gnss_euclidean_error: mean(diagnostics.iter().filter_map(|d| d.gnss_error)),
        rms_heading_error: probe.rms_heading_error,
        heading_unobservable: probe.unobservable,
        mean_abs_feedback: mean_abs_feedback(trace),
        max_abs_feedforward: [
            trace.iter().map(|r| r.nu_f.abs()).fold(0.0, f64::max),
            trace.iter().map(|r| r.omega_f.abs()).fold(0.0, f64::max),
        ],
        mean_abs_feedback_first_fifth: mean_abs_feedback(&trace[..fifth]),
        mean_abs_feedback_last_fifth: mean_abs_feedback(&trace[n - fifth..]),
        final_gains,
        constraint_violations: diagnostics.iter().filter(|d| d.constraint_violated).count(),
        mean_position_nees: mean(diagnostics.iter().map(|d| d.position_nees)),
        min_covariance_eigenvalue: diagnostics
            .iter()
            .map(|d| d.covariance_min_eigenvalue)
            .fold(f64::INFINITY, f64::min),
        max_kkt_residual: diagnostics.iter().map(|d| d.kkt_residual).fold(0.0, f64::max),
        qp_iteration_limit_hits: diagnostics.iter().filter(|d| d.qp_iteration_limit).count(),
    }
}
