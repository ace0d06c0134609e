//! Scenario configuration: arms, payload, path, gains, integrator and optimizer.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::control::{GainSchedule, ImpedanceGains};
use crate::dynamics::{ActuatorParams, Baumgarte, LoadModel, Plant, RobotModel};
use crate::error::{CrmError, Result};
use crate::kinematics::{ElbowBranch, PlanarPose};
use crate::optimize::GaConfig;
use crate::sim::{LoadTrajectory, SimOptions, Simulation, StorageMode};

pub const SCHEMA: &str = "crm-scenario/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    #[serde(flatten)]
    pub model: RobotModel,
    #[serde(default)]
    pub branch: ElbowBranch,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    #[default]
    Quintic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub start: PlanarPose,
    pub end: PlanarPose,
    /// Maneuver time T (s).
    pub duration: f64,
    #[serde(default)]
    pub profile: Profile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainConfig {
    #[serde(flatten)]
    pub gains: ImpedanceGains,
    /// CSV of `t, B̄…, K̄…`, resolved relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule_file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Integrator step (s).
    pub dt: f64,
    /// Rollout length (s); defaults to the maneuver time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub baumgarte: Baumgarte,
    pub storage: StorageMode,
    /// Radius ε_f of the terminal set around the goal (m).
    pub final_tolerance: f64,
    /// Largest grasp residual accepted by the feasibility test (m).
    pub drift_tolerance: f64,
    /// Largest tolerated fraction of saturated samples.
    pub saturation_tolerance: f64,
    /// Write every k-th step to the time series.
    pub output_stride: usize,
    /// Joint speed treated as divergence (rad/s).
    #[serde(default = "default_speed_limit")]
    pub speed_limit: f64,
}

fn default_speed_limit() -> f64 {
    100.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema: String,
    pub robots: Vec<ArmConfig>,
    pub load: LoadModel,
    pub trajectory: TrajectoryConfig,
    pub gains: GainConfig,
    pub sim: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<GaConfig>,
    #[serde(default)]
    pub seed: u64,
}

/// DC drive used on every joint of the reference arms.
pub fn reference_actuator() -> ActuatorParams {
    ActuatorParams {
        gear_ratio: 50.0,
        motor_constant: 0.07,
        resistance: 0.4,
        rotor_inertia: 0.0,
        viscous_friction: 0.0,
    }
}

/// Reference 3R arm with uniform-rod links.
pub fn reference_arm(base: PlanarPose) -> RobotModel {
    RobotModel::uniform_rods([0.425, 0.39, 0.13], [8.05, 2.84, 1.37], base, reference_actuator())
}

impl ScenarioConfig {
    /// Two arms lowering a 5 kg, 0.5 m rod by (0.4, −0.4) m in 1 s.
    pub fn rod_descent() -> Self {
        let joints = 6;
        Self {
            schema: SCHEMA.into(),
            robots: vec![
                ArmConfig { model: reference_arm(PlanarPose::new(0.0, 0.0, 0.0)), branch: ElbowBranch::Down },
                ArmConfig { model: reference_arm(PlanarPose::new(0.8, 0.0, 0.0)), branch: ElbowBranch::Up },
            ],
            load: LoadModel::rod(5.0, 0.5, 9.81),
            trajectory: TrajectoryConfig {
                start: PlanarPose::new(0.2, -0.3, 0.0),
                end: PlanarPose::new(0.6, -0.7, 0.0),
                duration: 1.0,
                profile: Profile::Quintic,
            },
            gains: GainConfig {
                gains: ImpedanceGains::uniform(joints, 18.0, 197.5, 825.0, 20.0, 30.0),
                schedule_file: None,
            },
            sim: SimConfig {
                dt: 1e-4,
                horizon: None,
                baumgarte: Baumgarte::default(),
                storage: StorageMode::Constant { voltage: 48.0 },
                final_tolerance: 5e-3,
                drift_tolerance: 1e-4,
                saturation_tolerance: 0.01,
                output_stride: 10,
                speed_limit: default_speed_limit(),
            },
            optimizer: Some(GaConfig::symmetric_boxes(joints, 22.0, 75.0)),
            seed: 0,
        }
    }

    pub fn arms(&self) -> usize {
        self.robots.len()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| CrmError::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        Ok(cfg)
    }

    /// Reads, attaches any schedule (relative to the file) and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CrmError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json_str(&text)?;
        if let Some(rel) = &cfg.gains.schedule_file {
            let full = match path.parent() {
                Some(dir) if rel.is_relative() => dir.join(rel),
                _ => rel.clone(),
            };
            cfg.gains.gains.schedule = Some(GainSchedule::from_csv_path(&full)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn plant(&self) -> Result<Plant> {
        let plant = Plant {
            robots: self.robots.iter().map(|r| r.model.clone()).collect(),
            load: self.load.clone(),
        };
        plant.validate()?;
        Ok(plant)
    }

    pub fn branches(&self) -> Vec<ElbowBranch> {
        self.robots.iter().map(|r| r.branch).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.sim.horizon.unwrap_or(self.trajectory.duration)
    }

    pub fn load_trajectory(&self) -> LoadTrajectory {
        LoadTrajectory {
            start: self.trajectory.start,
            end: self.trajectory.end,
            duration: self.trajectory.duration,
        }
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            dt: self.sim.dt,
            horizon: self.horizon(),
            baumgarte: self.sim.baumgarte,
            storage: self.sim.storage,
            speed_limit: self.sim.speed_limit,
        }
    }

    pub fn simulation(&self) -> Result<Simulation> {
        Ok(Simulation {
            plant: self.plant()?,
            gains: self.gains.gains.clone(),
            trajectory: self.load_trajectory(),
            branches: self.branches(),
            options: self.sim_options(),
        })
    }

    /// Joint positions of every arm on its reference at t = 0.
    pub fn initial_joint_positions(&self, plant: &Plant) -> Result<Vec<Vector3<f64>>> {
        let sim = Simulation {
            plant: plant.clone(),
            gains: self.gains.gains.clone(),
            trajectory: self.load_trajectory(),
            branches: self.branches(),
            options: self.sim_options(),
        };
        sim.initial_joint_positions()
    }

    /// Same scenario with constant offsets `B̄`, `K̄`.
    pub fn with_offsets(&self, damping: &[f64], stiffness: &[f64]) -> Self {
        let mut c = self.clone();
        c.gains.gains.damping_offset = damping.to_vec();
        c.gains.gains.stiffness_offset = stiffness.to_vec();
        c.gains.gains.schedule = None;
        c.gains.schedule_file = None;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(CrmError::Config(format!(
                "unsupported schema {:?}, expected {SCHEMA:?}",
                self.schema
            )));
        }
        let plant = self.plant()?;
        let joints = 3 * plant.arms();
        if self.gains.gains.joints() != joints {
            return Err(CrmError::Config(format!(
                "gain vectors have {} entries, expected {joints} (3 per arm)",
                self.gains.gains.joints()
            )));
        }
        self.gains.gains.validate()?;
        if !(self.trajectory.duration > 0.0) {
            return Err(CrmError::Config("trajectory duration must be positive".into()));
        }
        let s = &self.sim;
        if !(s.dt > 0.0 && s.dt <= self.horizon() && self.horizon() > 0.0) {
            return Err(CrmError::Config("sim.dt must be positive and no longer than the horizon".into()));
        }
        if !(s.final_tolerance > 0.0 && s.drift_tolerance > 0.0) {
            return Err(CrmError::Config("tolerances must be positive".into()));
        }
        if !(0.0..=1.0).contains(&s.saturation_tolerance) {
            return Err(CrmError::Config("saturation_tolerance must lie in [0, 1]".into()));
        }
        if s.output_stride == 0 {
            return Err(CrmError::Config("output_stride must be at least 1".into()));
        }
        s.storage.validate()?;
        if let Some(opt) = &self.optimizer {
            opt.validate(joints)?;
        }
        self.simulation()?.check_reachability(200)
    }
}
