use super::config::{ControllerMode, ScenarioConfig};
use super::metrics::{mean_std, RunSummary};
use super::run::{run_scenario, write_run, RunOutput};
use super::HarnessError;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Errors below this are treated as equal when forming ratios.
pub const RATIO_FLOOR: f64 = 1e-4;

/// `telc / traditional` on mean Euclidean errors floored at [`RATIO_FLOOR`].
pub fn error_ratio(telc: f64, traditional: f64) -> f64 {
    telc.max(RATIO_FLOOR) / traditional.max(RATIO_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub traditional: RunSummary,
    pub telc: RunSummary,
    pub error_ratio: f64,
}

pub struct Comparison {
    pub report: ComparisonReport,
    pub traditional: RunOutput,
    pub telc: RunOutput,
}

/// Runs both controllers on the same seed and disturbances.
pub fn compare(cfg: &ScenarioConfig) -> Result<Comparison, HarnessError> {
    let trad_cfg = cfg.clone().with_controller(ControllerMode::Traditional);
    let telc_cfg = cfg.clone().with_controller(ControllerMode::Telc);
    let (traditional, telc) = rayon::join(|| run_scenario(&trad_cfg), || run_scenario(&telc_cfg));
    let (traditional, telc) = (traditional?, telc?);
    let report = ComparisonReport {
        seed: cfg.seed,
        error_ratio: error_ratio(
            telc.summary.mean_euclidean_error,
            traditional.summary.mean_euclidean_error,
        ),
        traditional: traditional.summary.clone(),
        telc: telc.summary.clone(),
    };
    Ok(Comparison {
        report,
        traditional,
        telc,
    })
}

pub fn write_comparison(c: &Comparison, dir: &Path, plot_data: bool) -> Result<(), HarnessError> {
    write_run(&c.traditional, &dir.join("traditional"), plot_data)?;
    write_run(&c.telc, &dir.join("telc"), plot_data)?;
    let mut text = serde_json::to_string_pretty(&c.report)?;
    text.push('\n');
    std::fs::write(dir.join("comparison.json"), text)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seeds: Vec<u64>,
    pub runs: Vec<ComparisonReport>,
    pub traditional_error: MeanStd,
    pub telc_error: MeanStd,
    pub error_ratio: MeanStd,
    /// Ratio of the two seed-averaged mean errors.
    pub ratio_of_means: f64,
    pub constraint_violations: usize,
}

/// Compares both controllers over several seeds in parallel, one scenario
/// instance per worker.
pub fn sweep(cfg: &ScenarioConfig, seeds: &[u64]) -> Result<SweepReport, HarnessError> {
    let runs: Vec<ComparisonReport> = seeds
        .par_iter()
        .map(|&s| compare(&cfg.clone().with_seed(s)).map(|c| c.report))
        .collect::<Result<_, _>>()?;
    let trad: Vec<f64> = runs.iter().map(|r| r.traditional.mean_euclidean_error).collect();
    let telc: Vec<f64> = runs.iter().map(|r| r.telc.mean_euclidean_error).collect();
    let ratios: Vec<f64> = runs.iter().map(|r| r.error_ratio).collect();
    let traditional_error = MeanStd::of(&trad);
    let telc_error = MeanStd::of(&telc);
    Ok(SweepReport {
        seeds: seeds.to_vec(),
        ratio_of_means: error_ratio(telc_error.mean, traditional_error.mean),
        constraint_violations: runs
            .iter()
            .map(|r| r.traditional.constraint_violations + r.telc.constraint_violations)
            .sum(),
        runs,
        traditional_error,
        telc_error,
        error_ratio: MeanStd::of(&ratios),
    })
}

pub fn write_sweep(report: &SweepReport, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    for run in &report.runs {
        let run_dir = dir.join(format!("seed_{}", run.seed));
        std::fs::create_dir_all(&run_dir)?;
        std::fs::write(
            run_dir.join("comparison.json"),
            serde_json::to_string_pretty(run)? + "\n",
        )?;
    }
    std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}
