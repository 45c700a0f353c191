//! Closed-loop scenario runner: wires plant, estimator, MPC and TELC
//! together, and produces traces, summaries and controller comparisons.

mod compare;
mod config;
mod metrics;
mod run;
mod trace;

pub use compare::{
    compare, error_ratio, sweep, write_comparison, write_sweep, Comparison, ComparisonReport, MeanStd, SweepReport,
    RATIO_FLOOR,
};
pub use config::{ControllerMode, ScenarioConfig, StartOffset, TrajectoryConfig};
pub use metrics::{euclidean_error, mean, mean_std, summarize, RunSummary, StepDiagnostics};
pub use run::{run_scenario, write_run, RunOutput, Simulation};
pub use trace::{
    read_trace, write_diagnostics, write_estimation, write_plot_data, write_trace, write_truth, DiagnosticsRow,
    EstimationRow, TraceRow, TruthRow, TRACE_COLUMNS,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("run aborted at step {step} (t = {t} s): {message}")]
    Runtime { step: usize, t: f64, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for everything that
    /// goes wrong once the run has started.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 3,
        }
    }
}
