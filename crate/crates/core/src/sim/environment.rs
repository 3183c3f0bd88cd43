//! Obstacles, maze generation and compliant contact.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CioError, Result};
use crate::params::VehicleParams;
use crate::vehicle_model::{RigidState, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Obstacle {
    /// Axis-aligned box.
    Box { min: [f64; 3], max: [f64; 3] },
    /// Infinite wall; `normal` points into free space.
    Plane { point: [f64; 3], normal: [f64; 3] },
}

impl Obstacle {
    pub fn validate(&self) -> Result<()> {
        match self {
            Obstacle::Box { min, max } => {
                if (0..3).any(|i| !(max[i] > min[i])) {
                    return Err(CioError::InvalidParameter {
                        name: "environment.obstacles",
                        reason: format!("box {min:?}..{max:?} has non-positive extent"),
                    });
                }
            }
            Obstacle::Plane { normal, .. } => {
                if !(Vec3::from(*normal).norm() > 1e-9) {
                    return Err(CioError::InvalidParameter {
                        name: "environment.obstacles",
                        reason: "plane normal must be non-zero".into(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Signed distance from `x` to the obstacle surface and the outward normal
    /// at the closest point. Negative distance means `x` is inside.
    pub fn distance(&self, x: &Vec3) -> (f64, Vec3) {
        match self {
            Obstacle::Plane { point, normal } => {
                let n = Vec3::from(*normal).normalize();
                (n.dot(&(x - Vec3::from(*point))), n)
            }
            Obstacle::Box { min, max } => {
                let (lo, hi) = (Vec3::from(*min), Vec3::from(*max));
                let closest = x.zip_zip_map(&lo, &hi, |v, a, b| v.clamp(a, b));
                let offset = x - closest;
                let d = offset.norm();
                if d > 0.0 {
                    return (d, offset / d);
                }
                // inside: leave through the nearest face
                let mut best = (f64::INFINITY, Vec3::zeros());
                for i in 0..3 {
                    for (depth, sign) in [(x[i] - lo[i], -1.0), (hi[i] - x[i], 1.0)] {
                        if depth < best.0 {
                            let mut n = Vec3::zeros();
                            n[i] = sign;
                            best = (depth, n);
                        }
                    }
                }
                (-best.0, best.1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Environment {
    pub obstacles: Vec<Obstacle>,
    /// Ground plane at z = 0.
    pub ground: bool,
    /// Restitution of the unclamped spring-damper; sets the contact damping.
    pub restitution: f64,
    /// Coulomb coefficient for the tangential contact force.
    pub tangential_friction: f64,
    /// Radius of the sphere used against obstacles, m.
    pub collision_radius: f64,
    /// Undamped half-period of the contact spring, s.
    pub contact_time: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            obstacles: Vec::new(),
            ground: true,
            restitution: 0.0,
            tangential_friction: 0.0,
            collision_radius: 0.3,
            contact_time: 0.05,
        }
    }
}

/// Damping ratio used for zero restitution; the body creeps out of the
/// contact at about `1 / (4 zeta^2)` of its impact speed.
pub const PLASTIC_DAMPING_RATIO: f64 = 3.0;

/// Tangential speed below which friction is scaled down linearly, m/s.
pub const SLIP_SPEED: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    /// Index into the obstacle list; `None` for the ground.
    pub obstacle: Option<usize>,
    /// Unit normal into free space, world frame.
    pub normal: [f64; 3],
    /// Contact force, world frame, N.
    pub force: [f64; 3],
    pub penetration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactWrench {
    /// World frame.
    pub force: Vec3,
    /// Body frame, about the center of mass.
    pub moment: Vec3,
    pub contacts: Vec<ContactRecord>,
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.restitution) {
            return Err(CioError::InvalidParameter {
                name: "environment.restitution",
                reason: format!("must lie in [0, 1], got {}", self.restitution),
            });
        }
        if !(self.tangential_friction >= 0.0 && self.tangential_friction.is_finite()) {
            return Err(CioError::InvalidParameter {
                name: "environment.tangential_friction",
                reason: format!("must be non-negative, got {}", self.tangential_friction),
            });
        }
        if !(self.collision_radius > 0.0) {
            return Err(CioError::InvalidParameter {
                name: "environment.collision_radius",
                reason: "must be positive".into(),
            });
        }
        if !(self.contact_time > 0.0 && self.contact_time.is_finite()) {
            return Err(CioError::InvalidParameter {
                name: "environment.contact_time",
                reason: "must be positive".into(),
            });
        }
        self.obstacles.iter().try_for_each(Obstacle::validate)
    }

    /// Whether a sphere of the collision radius centered at `x` is clear of all obstacles.
    pub fn is_free(&self, x: &Vec3) -> bool {
        self.obstacles
            .iter()
            .all(|o| o.distance(x).0 > self.collision_radius)
    }

    /// Spring stiffness and damping for a body of mass `m`.
    pub fn contact_gains(&self, m: f64) -> (f64, f64) {
        let wn = std::f64::consts::PI / self.contact_time;
        let zeta = if self.restitution <= 0.0 {
            PLASTIC_DAMPING_RATIO
        } else {
            let l = -self.restitution.ln();
            l / (std::f64::consts::PI.powi(2) + l * l).sqrt()
        };
        (m * wn * wn, 2.0 * zeta * m * wn)
    }

    /// Compliant contact wrench for the current state. The ground is probed
    /// with the wheel radius, obstacles with the collision radius.
    pub fn contact_wrench(&self, s: &RigidState, p: &VehicleParams) -> Result<ContactWrench> {
        let (k, c) = self.contact_gains(p.m_t);
        let v = s.world_velocity();
        let mut probes: Vec<(Option<usize>, f64, Vec3, f64)> = Vec::new();
        for (i, o) in self.obstacles.iter().enumerate() {
            let (d, n) = o.distance(&s.r);
            probes.push((Some(i), d, n, self.collision_radius));
        }
        if self.ground {
            probes.push((None, s.r.z, Vec3::z(), p.wheel_radius));
        }
        let mut out = ContactWrench {
            force: Vec3::zeros(),
            moment: Vec3::zeros(),
            contacts: Vec::new(),
        };
        for (obstacle, d, n, radius) in probes {
            if d >= radius {
                continue;
            }
            if d < 0.0 {
                return Err(CioError::TunnelingDetected { depth: radius - d });
            }
            let penetration = radius - d;
            let vn = n.dot(&v);
            let normal = (k * penetration - c * vn).max(0.0);
            if normal == 0.0 {
                continue;
            }
            let vt = v - n * vn;
            let friction = -vt * (self.tangential_friction * normal / vt.norm().max(SLIP_SPEED));
            let force = n * normal + friction;
            let lever = s.q.inverse() * (-n * radius);
            out.force += force;
            out.moment += lever.cross(&(s.q.inverse() * force));
            out.contacts.push(ContactRecord {
                obstacle,
                normal: n.into(),
                force: force.into(),
                penetration,
            });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MazeConfig {
    pub size: f64,
    pub cells: usize,
    pub wall_thickness: f64,
    pub wall_height: f64,
    pub seed: u64,
}

impl Default for MazeConfig {
    fn default() -> Self {
        Self {
            size: 10.0,
            cells: 6,
            wall_thickness: 1.0 / 6.0,
            wall_height: 3.0,
            seed: 3,
        }
    }
}

impl MazeConfig {
    pub fn cell_size(&self) -> f64 {
        self.size / self.cells as f64
    }

    pub fn corridor_width(&self) -> f64 {
        self.cell_size() - self.wall_thickness
    }

    /// Center of cell `(i, j)` at height `z`.
    pub fn cell_center(&self, i: usize, j: usize, z: f64) -> Vec3 {
        let c = self.cell_size();
        Vec3::new((i as f64 + 0.5) * c, (j as f64 + 0.5) * c, z)
    }
}

/// Perfect maze by randomized depth-first search; every cell is reachable.
pub fn generate_maze(cfg: &MazeConfig) -> Vec<Obstacle> {
    let n = cfg.cells.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // east[i][j]: wall between (i, j) and (i + 1, j); north: between (i, j) and (i, j + 1)
    let mut east = vec![vec![true; n]; n];
    let mut north = vec![vec![true; n]; n];
    let mut visited = vec![vec![false; n]; n];
    let mut stack = vec![(0usize, 0usize)];
    visited[0][0] = true;
    while let Some(&(i, j)) = stack.last() {
        let mut options = Vec::new();
        if i + 1 < n && !visited[i + 1][j] {
            options.push((i + 1, j));
        }
        if i > 0 && !visited[i - 1][j] {
            options.push((i - 1, j));
        }
        if j + 1 < n && !visited[i][j + 1] {
            options.push((i, j + 1));
        }
        if j > 0 && !visited[i][j - 1] {
            options.push((i, j - 1));
        }
        match options.choose(&mut rng) {
            None => {
                stack.pop();
            }
            Some(&(a, b)) => {
                if a != i {
                    east[i.min(a)][j] = false;
                } else {
                    north[i][j.min(b)] = false;
                }
                visited[a][b] = true;
                stack.push((a, b));
            }
        }
    }

    let c = cfg.cell_size();
    let h = cfg.wall_thickness / 2.0;
    let top = cfg.wall_height;
    let wall_x = |x: f64, y0: f64, y1: f64| Obstacle::Box {
        min: [x - h, y0 - h, 0.0],
        max: [x + h, y1 + h, top],
    };
    let wall_y = |y: f64, x0: f64, x1: f64| Obstacle::Box {
        min: [x0 - h, y - h, 0.0],
        max: [x1 + h, y + h, top],
    };
    let mut walls = vec![
        wall_x(0.0, 0.0, cfg.size),
        wall_x(cfg.size, 0.0, cfg.size),
        wall_y(0.0, 0.0, cfg.size),
        wall_y(cfg.size, 0.0, cfg.size),
    ];
    for i in 0..n {
        for j in 0..n {
            if i + 1 < n && east[i][j] {
                walls.push(wall_x((i + 1) as f64 * c, j as f64 * c, (j + 1) as f64 * c));
            }
            if j + 1 < n && north[i][j] {
                walls.push(wall_y((j + 1) as f64 * c, i as f64 * c, (i + 1) as f64 * c));
            }
        }
    }
    walls
}
