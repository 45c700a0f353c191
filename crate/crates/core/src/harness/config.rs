use super::HarnessError;
use crate::estimation::EkfConfig;
use crate::kinematics::Pose;
use crate::mpc::MpcConfig;
use crate::path_reference::{build_trajectory, total_duration, PathSegment, ReferenceTrajectory};
use crate::plant::DisturbanceConfig;
use crate::telc::TelcConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerMode {
    /// MPC feedback plus the nominal feedforward `(nu_r, omega_r)`.
    Traditional,
    /// MPC feedback plus the learned feedforward.
    #[default]
    Telc,
}

impl ControllerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerMode::Traditional => "traditional",
            ControllerMode::Telc => "telc",
        }
    }
}

impl std::str::FromStr for ControllerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "traditional" => Ok(ControllerMode::Traditional),
            "telc" => Ok(ControllerMode::Telc),
            other => Err(format!(
                "unknown controller '{other}', expected 'traditional' or 'telc'"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    #[serde(default)]
    pub initial_pose: Pose,
    pub segments: Vec<PathSegment>,
}

/// Where the robot starts relative to the first reference pose, expressed in
/// the reference frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartOffset {
    pub longitudinal: f64,
    pub lateral: f64,
    pub heading: f64,
}

impl Default for StartOffset {
    fn default() -> Self {
        Self {
            longitudinal: 0.0,
            lateral: 0.2,
            heading: 0.0,
        }
    }
}

impl StartOffset {
    pub const NONE: StartOffset = StartOffset {
        longitudinal: 0.0,
        lateral: 0.0,
        heading: 0.0,
    };

    pub fn apply(&self, reference: &Pose) -> Pose {
        let (s, c) = reference.theta.sin_cos();
        Pose::new(
            reference.x + c * self.longitudinal - s * self.lateral,
            reference.y + s * self.longitudinal + c * self.lateral,
            reference.theta + self.heading,
        )
    }
}

fn default_t_step() -> f64 {
    crate::mpc::default_t_step()
}

/// Complete description of one closed-loop run. Parsed from TOML; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub controller: ControllerMode,
    #[serde(default = "default_t_step")]
    pub t_step: f64,
    /// Simulated time; defaults to the full trajectory.
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub start: StartOffset,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub telc: TelcConfig,
    #[serde(default)]
    pub ekf: EkfConfig,
    #[serde(default)]
    pub disturbances: DisturbanceConfig,
}

impl ScenarioConfig {
    /// Scenario with default sub-configurations on the given path.
    pub fn new(segments: Vec<PathSegment>) -> Self {
        Self {
            name: String::new(),
            controller: ControllerMode::default(),
            t_step: default_t_step(),
            duration: None,
            seed: 0,
            output_dir: None,
            trajectory: TrajectoryConfig {
                initial_pose: Pose::default(),
                segments,
            },
            start: StartOffset::default(),
            mpc: MpcConfig::default(),
            telc: TelcConfig::default(),
            ekf: EkfConfig::default(),
            disturbances: DisturbanceConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let cfg = cfg.synchronized();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable as TOML")
    }

    /// Copies the scenario-wide step and seed into the sub-configurations.
    pub fn synchronized(mut self) -> Self {
        self.mpc.t_step = self.t_step;
        self.telc.t_step = self.t_step;
        self.ekf.t_step = self.t_step;
        self.disturbances.seed = self.seed;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.synchronized()
    }

    pub fn with_controller(mut self, controller: ControllerMode) -> Self {
        self.controller = controller;
        self
    }

    pub fn trajectory_duration(&self) -> f64 {
        total_duration(&self.trajectory.segments)
    }

    pub fn effective_duration(&self) -> f64 {
        self.duration.unwrap_or_else(|| self.trajectory_duration())
    }

    /// Number of control steps executed.
    pub fn step_count(&self) -> usize {
        (self.effective_duration() / self.t_step + 1e-9).floor() as usize
    }

    pub fn reference(&self) -> Result<ReferenceTrajectory, HarnessError> {
        build_trajectory(&self.trajectory.segments, self.trajectory.initial_pose, self.t_step)
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(self.t_step > 0.0 && self.t_step.is_finite()) {
            return bad(format!("t_step must be positive, got {}", self.t_step));
        }
        self.reference()?;
        let total = self.trajectory_duration();
        if let Some(d) = self.duration {
            if !(d > 0.0) || d > total + 1e-9 {
                return bad(format!("duration {d} must lie in (0, {total}]"));
            }
        }
        if self.step_count() == 0 {
            return bad("scenario is shorter than one control step".into());
        }
        let synced = self.mpc.t_step == self.t_step
            && self.telc.t_step == self.t_step
            && self.ekf.t_step == self.t_step
            && self.disturbances.seed == self.seed;
        if !synced {
            return bad("sub-configurations are out of sync; call synchronized()".into());
        }
        self.mpc.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.telc.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.ekf.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.disturbances
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }
}
