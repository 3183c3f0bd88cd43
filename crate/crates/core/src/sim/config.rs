//! Scenario configuration files (TOML, versioned).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cio_filter::{MeasurementNoise, ProcessNoise, UpdateTrigger};
use crate::error::CioError;
use crate::params::VehicleParams;
use crate::reactive_planner::PlannerConfig;
use crate::vehicle_model::{DynamicsModel, Vec3};
use crate::velocity_controller::ControllerGains;
use crate::wrench_estimator::MetricWeights;

use super::environment::{generate_maze, Environment, MazeConfig, Obstacle};
use super::sensors::SensorNoise;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("config key `{key}`: {message}")]
    Parse { key: String, message: String },
    #[error("config key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Io { .. } => None,
            ConfigError::Parse { key, .. } | ConfigError::Invalid { key, .. } => Some(key),
        }
    }
}

impl From<CioError> for ConfigError {
    fn from(e: CioError) -> Self {
        match e {
            CioError::InvalidParameter { name, reason } => ConfigError::Invalid {
                key: name.to_string(),
                message: reason,
            },
            other => ConfigError::Invalid {
                key: "<config>".into(),
                message: other.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Flying,
    Rolling,
    Bouncing,
}

/// Velocity source for the velocity loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Estimate,
    Truth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsKind {
    ForceOnly,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSpec {
    pub obstacles: Vec<Obstacle>,
    pub maze: Option<MazeConfig>,
    pub ground: bool,
    pub restitution: f64,
    pub tangential_friction: f64,
    pub collision_radius: f64,
    pub contact_time: f64,
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        let env = Environment::default();
        Self {
            obstacles: Vec::new(),
            maze: None,
            ground: env.ground,
            restitution: env.restitution,
            tangential_friction: env.tangential_friction,
            collision_radius: env.collision_radius,
            contact_time: env.contact_time,
        }
    }
}

impl EnvironmentSpec {
    pub fn build(&self) -> Environment {
        let mut obstacles = self.obstacles.clone();
        if let Some(maze) = &self.maze {
            obstacles.extend(generate_maze(maze));
        }
        Environment {
            obstacles,
            ground: self.ground,
            restitution: self.restitution,
            tangential_friction: self.tangential_friction,
            collision_radius: self.collision_radius,
            contact_time: self.contact_time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub process: ProcessNoise,
    pub measurement: MeasurementNoise,
    pub trigger: UpdateTrigger,
    pub initial_position_sigma: f64,
    pub initial_attitude_sigma: f64,
    pub initial_velocity_sigma: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            process: ProcessNoise::default(),
            measurement: MeasurementNoise::default(),
            trigger: UpdateTrigger::default(),
            initial_position_sigma: 0.01,
            initial_attitude_sigma: 0.01,
            initial_velocity_sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    /// Collision threshold expressed as a force, N; the metric threshold is its square.
    pub threshold_force: f64,
    pub refractory: f64,
    /// Period at which a contact that stays above threshold is re-reported, s;
    /// 0 reports each crossing once.
    pub repeat: f64,
    pub weights: WeightsKind,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            threshold_force: 6.0,
            refractory: 0.1,
            repeat: 0.5,
            weights: WeightsKind::ForceOnly,
        }
    }
}

impl DetectionConfig {
    pub fn weights(&self, p: &VehicleParams) -> MetricWeights {
        match self.weights {
            WeightsKind::ForceOnly => MetricWeights::force_only(),
            WeightsKind::Balanced => MetricWeights::balanced(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    World,
    Body,
}

/// Constant external force switched on at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub force: [f64; 3],
    pub frame: Frame,
    pub start: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StartConfig {
    pub position: [f64; 3],
    /// World frame.
    pub velocity: [f64; 3],
    pub yaw: f64,
}

impl Default for StartConfig {
    fn default() -> Self {
        Self {
            position: [0.0, 0.0, 1.0],
            velocity: [0.0; 3],
            yaw: 0.0,
        }
    }
}

/// Ground-driving behavior for rolling mode: constant speed with yaw-rate
/// loops alternating in direction (a figure eight).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RollingConfig {
    pub speed: f64,
    pub loop_period: f64,
    pub kp_speed: f64,
    pub kp_yaw: f64,
    /// Constant force opposing the direction of travel, N.
    pub resistance: f64,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self {
            speed: 0.5,
            loop_period: 10.0,
            kp_speed: 20.0,
            kp_yaw: 0.5,
            resistance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub mode: Mode,
    pub duration: f64,
    /// When present, seeds both the sensor noise and the planner.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_dynamics")]
    pub dynamics: DynamicsModel,
    #[serde(default = "yes")]
    pub cio: bool,
    #[serde(default = "yes")]
    pub comparison: bool,
    #[serde(default = "default_feedback")]
    pub feedback: Feedback,
    /// Height held from a direct height reading; `None` leaves z to the velocity loop.
    #[serde(default)]
    pub hold_height: Option<f64>,
    /// Initial velocity reference, world frame; defaults to the planner's.
    #[serde(default)]
    pub reference: Option<[f64; 3]>,
    #[serde(default)]
    pub start: StartConfig,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub noise: SensorNoise,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub controller: ControllerGains,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default)]
    pub disturbance: Option<Disturbance>,
    #[serde(default)]
    pub rolling: RollingConfig,
}

fn default_dynamics() -> DynamicsModel {
    DynamicsModel::Rollocopter
}

fn default_feedback() -> Feedback {
    Feedback::Estimate
}

fn yes() -> bool {
    true
}

impl ScenarioConfig {
    /// Minimal flying configuration in an empty world.
    pub fn new(mode: Mode, duration: f64) -> Self {
        Self {
            version: CONFIG_VERSION,
            name: String::new(),
            mode,
            duration,
            seed: None,
            dynamics: default_dynamics(),
            cio: true,
            comparison: true,
            feedback: default_feedback(),
            hold_height: None,
            reference: None,
            start: StartConfig::default(),
            vehicle: VehicleParams::default(),
            environment: EnvironmentSpec::default(),
            noise: SensorNoise::default(),
            planner: PlannerConfig::default(),
            controller: ControllerGains::default(),
            filter: FilterConfig::default(),
            detection: DetectionConfig::default(),
            disturbance: None,
            rolling: RollingConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Parse {
            key: "<syntax>".into(),
            message: e.to_string(),
        })?;
        let mut cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path.is_empty() || path == "." { "<root>".to_string() } else { path };
            let message = e.into_inner().message().to_string();
            ConfigError::Parse { key, message }
        })?;
        if let Some(seed) = cfg.seed {
            cfg.apply_seed(seed);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario config serializes")
    }

    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.noise.seed = seed;
        self.planner.rng_seed = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, message: String| {
            Err(ConfigError::Invalid {
                key: key.into(),
                message,
            })
        };
        if self.version != CONFIG_VERSION {
            return invalid(
                "version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", self.version),
            );
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return invalid("duration", format!("must be positive, got {}", self.duration));
        }
        if self.dynamics == DynamicsModel::Rolling && self.mode != Mode::Rolling {
            return invalid("dynamics", "the rolling model is only valid with mode = \"rolling\"".into());
        }
        if let Some(h) = self.hold_height {
            if !(h > 0.0) {
                return invalid("hold_height", format!("must be positive, got {h}"));
            }
        }
        if !(self.detection.threshold_force > 0.0) {
            return invalid("detection.threshold_force", "must be positive".into());
        }
        if !(self.detection.refractory >= 0.0) {
            return invalid("detection.refractory", "must be non-negative".into());
        }
        if !(self.detection.repeat >= 0.0) {
            return invalid("detection.repeat", "must be non-negative".into());
        }
        if !(self.rolling.loop_period > 0.0) {
            return invalid("rolling.loop_period", "must be positive".into());
        }
        match self.filter.measurement {
            MeasurementNoise::Isotropic { sigma } | MeasurementNoise::Anisotropic { sigma, .. } if !(sigma > 0.0) => {
                return invalid("filter.measurement.sigma", "must be positive".into());
            }
            _ => {}
        }
        prefix("vehicle", self.vehicle.validate())?;
        prefix("planner", self.planner.validate())?;
        prefix("controller", self.controller.validate())?;
        self.noise.validate()?;
        self.environment.build().validate()?;
        let start = Vec3::from(self.start.position);
        if self.mode != Mode::Rolling && !self.environment.build().is_free(&start) {
            return invalid("start.position", "inside or touching an obstacle".into());
        }
        Ok(())
    }
}

fn prefix(section: &str, r: crate::error::Result<()>) -> Result<(), ConfigError> {
    r.map_err(|e| match e {
        CioError::InvalidParameter { name, reason } if !name.contains('.') => ConfigError::Invalid {
            key: format!("{section}.{name}"),
            message: reason,
        },
        other => other.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "version = 1\nmode = \"flying\"\nduration = 2.0\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.vehicle, VehicleParams::default());
        assert!(cfg.cio && cfg.comparison);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ScenarioConfig::new(Mode::Bouncing, 3.0);
        let maze = MazeConfig::default();
        cfg.start.position = maze.cell_center(0, 0, 1.0).into();
        cfg.environment.maze = Some(maze);
        cfg.disturbance = Some(Disturbance { force: [0.0, 2.0, 0.0], frame: Frame::World, start: 1.0 });
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ScenarioConfig::from_toml(&format!("{MINIMAL}[noise]\naccel_sigmaa = 0.1\n")).unwrap_err();
        assert!(err.to_string().contains("noise"), "{err}");
        assert!(err.to_string().contains("accel_sigmaa"), "{err}");
    }

    #[test]
    fn wrong_type_is_named() {
        let err = ScenarioConfig::from_toml(&format!("{MINIMAL}[controller]\nkp_vel = \"fast\"\n")).unwrap_err();
        assert_eq!(err.key(), Some("controller.kp_vel"));
    }

    #[test]
    fn invalid_values_are_named() {
        let err = ScenarioConfig::from_toml("version = 1\nmode = \"flying\"\nduration = -1.0\n").unwrap_err();
        assert_eq!(err.key(), Some("duration"));
        let err = ScenarioConfig::from_toml(&format!("{MINIMAL}[vehicle]\nm_t = -1.0\n")).unwrap_err();
        assert_eq!(err.key(), Some("vehicle.m_t"));
        let err = ScenarioConfig::from_toml("version = 2\nmode = \"flying\"\nduration = 1.0\n").unwrap_err();
        assert_eq!(err.key(), Some("version"));
    }

    #[test]
    fn seed_propagates() {
        let cfg = ScenarioConfig::from_toml(&format!("{MINIMAL}seed = 42\n")).unwrap();
        assert_eq!(cfg.noise.seed, 42);
        assert_ne!(cfg.planner.rng_seed, 0);
    }
}
