//! Ready-made scenarios used by the CLI, the tests and the bundled configs.

use super::config::{Disturbance, Feedback, Frame, Mode, ScenarioConfig};
use super::environment::{MazeConfig, Obstacle};
use super::sensors::SensorNoise;

/// Start-cell flight through the default maze with a horizontally biased accelerometer.
pub fn maze(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(Mode::Flying, 60.0);
    cfg.name = "maze".into();
    let maze = MazeConfig::default();
    cfg.start.position = maze.cell_center(0, 0, 1.0).into();
    cfg.start.velocity = [cfg.planner.v_nom, 0.0, 0.0];
    cfg.environment.maze = Some(maze);
    cfg.hold_height = Some(1.0);
    cfg.noise.accel_bias = [0.05, 0.05, 0.0];
    cfg.apply_seed(seed);
    cfg
}

/// Straight flight into one wall, then away from it.
pub fn corridor(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(Mode::Flying, 8.0);
    cfg.name = "corridor".into();
    cfg.environment.obstacles = vec![Obstacle::Plane {
        point: [3.0, 0.0, 0.0],
        normal: [-1.0, 0.0, 0.0],
    }];
    cfg.start.velocity = [cfg.planner.v_nom, 0.0, 0.0];
    cfg.hold_height = Some(1.0);
    cfg.noise.accel_bias = [0.05, 0.05, 0.0];
    cfg.apply_seed(seed);
    cfg
}

/// One hit on a wall rotated by `angle_deg` about z; the vehicle approaches along +x.
pub fn wall_trial(angle_deg: f64, seed: u64) -> ScenarioConfig {
    let a = angle_deg.to_radians();
    let mut cfg = ScenarioConfig::new(Mode::Flying, 2.5);
    cfg.name = format!("wall_{angle_deg}");
    cfg.environment.obstacles = vec![Obstacle::Plane {
        point: [1.5, 0.0, 0.0],
        normal: [-a.cos(), -a.sin(), 0.0],
    }];
    cfg.start.velocity = [cfg.planner.v_nom, 0.0, 0.0];
    cfg.hold_height = Some(1.0);
    cfg.feedback = Feedback::Truth;
    cfg.comparison = false;
    cfg.apply_seed(seed);
    cfg
}

/// Repeated take-off and landing on flat ground.
pub fn bounce(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(Mode::Bouncing, 40.0);
    cfg.name = "bounce".into();
    cfg.start.position = [0.0, 0.0, cfg.vehicle.wheel_radius];
    cfg.noise.accel_bias = [0.05; 3];
    cfg.apply_seed(seed);
    cfg
}

/// Ground driving in alternating loops against a constant frontal resistance.
pub fn figure_eight(resistance: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(Mode::Rolling, 30.0);
    cfg.name = "figure_eight".into();
    cfg.dynamics = crate::vehicle_model::DynamicsModel::Rolling;
    cfg.start.velocity = [cfg.rolling.speed, 0.0, 0.0];
    cfg.rolling.resistance = resistance;
    cfg
}

/// Hover with a constant lateral body force switched on at 1 s, noiseless.
pub fn lateral_force(force: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(Mode::Flying, 3.0);
    cfg.name = "lateral_force".into();
    cfg.reference = Some([0.0; 3]);
    cfg.hold_height = Some(1.0);
    cfg.feedback = Feedback::Truth;
    cfg.comparison = false;
    cfg.noise = SensorNoise::noiseless();
    cfg.disturbance = Some(Disturbance {
        force: [0.0, force, 0.0],
        frame: Frame::Body,
        start: 1.0,
    });
    cfg
}

/// Constant-velocity flight in an empty world, noiseless.
pub fn tracking(duration: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(Mode::Flying, duration);
    cfg.name = "tracking".into();
    cfg.reference = Some([1.0, 0.0, 0.0]);
    cfg.start.velocity = [1.0, 0.0, 0.0];
    cfg.hold_height = Some(1.0);
    cfg.noise = SensorNoise::noiseless();
    cfg
}

pub fn by_name(name: &str, seed: u64) -> Option<ScenarioConfig> {
    Some(match name {
        "maze" => maze(seed),
        "corridor" => corridor(seed),
        "bounce" => bounce(seed),
        "figure_eight" => figure_eight(1.0),
        "lateral_force" => lateral_force(2.0),
        "tracking" => tracking(5.0),
        _ => return None,
    })
}

pub const NAMES: [&str; 6] = ["maze", "corridor", "bounce", "figure_eight", "lateral_force", "tracking"];
