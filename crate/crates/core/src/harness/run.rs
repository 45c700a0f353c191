use super::config::{ControllerMode, ScenarioConfig};
use super::metrics::{euclidean_error, summarize, RunSummary, StepDiagnostics};
use super::trace::{
    write_diagnostics, write_estimation, write_plot_data, write_trace, write_truth, DiagnosticsRow, EstimationRow,
    TraceRow, TruthRow,
};
use super::HarnessError;
use crate::error_model::error_state;
use crate::estimation::Ekf;
use crate::kinematics::VelocityCommand;
use crate::mpc::MpcController;
use crate::path_reference::ReferenceTrajectory;
use crate::plant::{plant_step, sense, PlantState, SensorNoise, SensorReadings};
use crate::telc::{GainSet, TelcLearner};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

/// Everything produced by one closed-loop run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub trace: Vec<TraceRow>,
    pub truth: Vec<TruthRow>,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Closed loop of plant, estimator, MPC feedback and (optionally) learned
/// feedforward, advanced one control period at a time.
pub struct Simulation {
    cfg: ScenarioConfig,
    reference: ReferenceTrajectory,
    plant: PlantState,
    noise: SensorNoise,
    ekf: Ekf,
    mpc: MpcController,
    learner: TelcLearner,
    /// Readings taken at the end of the previous period.
    pending: Option<SensorReadings>,
    step: usize,
}

fn runtime(step: usize, t: f64, message: impl std::fmt::Display) -> HarnessError {
    HarnessError::Runtime {
        step,
        t,
        message: message.to_string(),
    }
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let reference = cfg.reference()?;
        let start = cfg.start.apply(&reference.samples()[0].pose());
        let config_err = |e: &dyn std::fmt::Display| HarnessError::Config(e.to_string());
        let ekf = Ekf::new(cfg.ekf.clone(), start).map_err(|e| config_err(&e))?;
        let mpc = MpcController::new(cfg.mpc.clone()).map_err(|e| config_err(&e))?;
        let learner = TelcLearner::new(cfg.telc.clone(), GainSet::NOMINAL).map_err(|e| config_err(&e))?;
        Ok(Self {
            noise: SensorNoise::new(cfg.seed),
            plant: PlantState::at_rest(start),
            reference,
            ekf,
            mpc,
            learner,
            pending: None,
            step: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn plant(&self) -> &PlantState {
        &self.plant
    }

    pub fn gains(&self) -> GainSet {
        self.learner.gains()
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.cfg.step_count()
    }

    /// Runs one control period and returns what was logged for it.
    pub fn step(&mut self) -> Result<(TraceRow, TruthRow, StepDiagnostics), HarnessError> {
        let k = self.step;
        let t = k as f64 * self.cfg.t_step;
        let truth = self.plant;

        // (1) sense; truth stays on this side of the interface
        let readings = match self.pending.take() {
            Some(r) => r,
            None => sense(&truth, &self.cfg.disturbances, &self.noise, k as u64, t).readings(),
        };

        // (2) estimate
        if k > 0 {
            self.ekf.predict(readings.nu_meas, readings.omega_meas);
        }
        self.ekf.update(&readings.gnss).map_err(|e| runtime(k, t, e))?;
        let est = self.ekf.state().clone();

        // (3) error in the estimated robot frame
        let r = *self.reference.sample_clamped(k);
        let e = error_state(&r.pose(), &est.mean);

        // (4) feedback
        let horizon = self.reference.control_horizon(k, self.cfg.mpc.n_p);
        let (u_b, mpc_diag) = self.mpc.step(&e, &horizon).map_err(|err| runtime(k, t, err))?;

        // (5) feedforward
        let gains = self.learner.gains();
        let u_f = self.learner.feedforward(r.nu, r.omega);

        // (6) apply
        let cmd = VelocityCommand::new(u_b.nu_e + u_f.nu, u_b.omega_e + u_f.omega);
        self.plant = plant_step(&truth, cmd, &self.cfg.disturbances, self.cfg.t_step);
        if !self.plant.is_finite() {
            return Err(runtime(k, t, "plant state became non-finite"));
        }

        // (7) learn from the odometry that closes this period; the same
        // readings open the next one
        let closing = sense(
            &self.plant,
            &self.cfg.disturbances,
            &self.noise,
            k as u64 + 1,
            t + self.cfg.t_step,
        )
        .readings();
        self.pending = Some(closing);
        let measured = VelocityCommand::new(closing.nu_meas, closing.omega_meas);
        let learning = match self.cfg.controller {
            ControllerMode::Telc => self.learner.learn(&e, cmd, measured, r.nu, r.omega),
            ControllerMode::Traditional => self.learner.observe(&e, cmd, measured, r.nu, r.omega),
        };
        if !learning.gains.is_finite() {
            return Err(runtime(k, t, "feedforward coefficients became non-finite"));
        }

        // (8) log
        let row = TraceRow {
            t,
            ref_x: r.x,
            ref_y: r.y,
            ref_theta: r.theta,
            nu_r: r.nu,
            omega_r: r.omega,
            true_x: truth.pose.x,
            true_y: truth.pose.y,
            true_theta: truth.pose.theta,
            est_x: est.mean.x,
            est_y: est.mean.y,
            est_theta: est.mean.theta,
            e1: e.e1,
            e2: e.e2,
            e3: e.e3,
            nu_b: u_b.nu_e,
            omega_b: u_b.omega_e,
            nu_f: u_f.nu,
            omega_f: u_f.omega,
            nu_cmd: cmd.nu,
            omega_cmd: cmd.omega,
            k_nu_1: gains.k_nu_1,
            k_nu_0: gains.k_nu_0,
            k_omega_1: gains.k_omega_1,
            k_omega_0: gains.k_omega_0,
            e_nu: learning.costs.e_nu,
            e_omega: learning.costs.e_omega,
            v: learning.costs.v,
            euclid_err: euclidean_error(&truth.pose, &r),
        };
        let truth_row = TruthRow {
            t,
            true_x: truth.pose.x,
            true_y: truth.pose.y,
            true_theta: truth.pose.theta,
            nu_actual: truth.nu_actual,
            omega_actual: truth.omega_actual,
        };
        let diag = StepDiagnostics {
            predicted_cost: mpc_diag.predicted_cost,
            qp_iters: mpc_diag.qp_iters,
            active_constraints: mpc_diag.active_constraints,
            s_nu: learning.s_nu,
            s_omega: learning.s_omega,
            position_nees: est.position_nees(&truth.pose),
            covariance_trace: est.covariance.trace(),
            theta_variance: est.covariance[(2, 2)],
            gnss_error: readings
                .gnss
                .valid
                .then(|| (r.x - readings.gnss.x_gnss).hypot(r.y - readings.gnss.y_gnss)),
            kkt_residual: mpc_diag.kkt_residual,
            qp_iteration_limit: mpc_diag.status != crate::qp::QpStatus::Converged,
            constraint_violated: !self.cfg.mpc.within_bounds(&u_b),
            covariance_min_eigenvalue: est.min_eigenvalue(),
        };
        self.step += 1;
        Ok((row, truth_row, diag))
    }
}

/// Runs the scenario to completion in memory.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, HarnessError> {
    let mut sim = Simulation::new(cfg.clone())?;
    let n = cfg.step_count();
    let mut trace = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut diagnostics = Vec::with_capacity(n);
    while !sim.is_finished() {
        let (row, truth_row, diag) = sim.step()?;
        trace.push(row);
        truth.push(truth_row);
        diagnostics.push(diag);
    }
    let summary = summarize(&cfg.name, cfg.controller, cfg.seed, &trace, &diagnostics, sim.gains());
    Ok(RunOutput {
        summary,
        trace,
        truth,
        diagnostics,
    })
}

/// Writes `trace.csv`, `truth.csv`, `estimation.csv`, `diagnostics.csv`,
/// `summary.json` and optionally `plot_data.csv` into `dir`.
pub fn write_run(output: &RunOutput, dir: &Path, plot_data: bool) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    write_trace(BufWriter::new(File::create(dir.join("trace.csv"))?), &output.trace)?;
    write_truth(BufWriter::new(File::create(dir.join("truth.csv"))?), &output.truth)?;
    let estimation: Vec<EstimationRow> = output
        .trace
        .iter()
        .zip(&output.diagnostics)
        .map(|(r, d)| EstimationRow {
            t: r.t,
            est_x: r.est_x,
            est_y: r.est_y,
            est_theta: r.est_theta,
            cov_trace: d.covariance_trace,
            nees: d.position_nees,
        })
        .collect();
    write_estimation(BufWriter::new(File::create(dir.join("estimation.csv"))?), &estimation)?;
    let diagnostics: Vec<DiagnosticsRow> = output
        .trace
        .iter()
        .zip(&output.diagnostics)
        .map(|(r, d)| DiagnosticsRow {
            t: r.t,
            predicted_cost: d.predicted_cost,
            qp_iters: d.qp_iters,
            active_constraints: d.active_constraints,
            kkt_residual: d.kkt_residual,
            s_nu: d.s_nu,
            s_omega: d.s_omega,
        })
        .collect();
    write_diagnostics(BufWriter::new(File::create(dir.join("diagnostics.csv"))?), &diagnostics)?;
    let mut summary = serde_json::to_string_pretty(&output.summary)?;
    summary.push('\n');
    std::fs::write(dir.join("summary.json"), summary)?;
    if plot_data {
        write_plot_data(BufWriter::new(File::create(dir.join("plot_data.csv"))?), &output.trace)?;
    }
    Ok(())
}
