//! Collision-driven reference velocities.

use nalgebra::Unit;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cio_filter::DEFAULT_ZERO_FORCE;
use crate::error::{CioError, Result};
use crate::vehicle_model::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BounceRule {
    Specular,
    Cone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub v_nom: f64,
    pub dpsi_min: f64,
    pub dpsi_max: f64,
    pub bounce_period: f64,
    pub bounce_amplitude: f64,
    pub rng_seed: u64,
    pub rule: BounceRule,
    /// Bounce in the horizontal plane only; vertical motion is left to the
    /// height behavior.
    pub planar: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            v_nom: 1.0,
            dpsi_min: 30f64.to_radians(),
            dpsi_max: 60f64.to_radians(),
            bounce_period: 2.0,
            bounce_amplitude: 0.5,
            rng_seed: 0,
            rule: BounceRule::Cone,
            planar: true,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(CioError::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if !(self.v_nom > 0.0) {
            return bad("v_nom", "must be positive");
        }
        if !(0.0 <= self.dpsi_min && self.dpsi_min <= self.dpsi_max && self.dpsi_max < std::f64::consts::FRAC_PI_2) {
            return bad("dpsi_min", "need 0 <= dpsi_min <= dpsi_max < pi/2");
        }
        if !(self.bounce_period > 0.0) {
            return bad("bounce_period", "must be positive");
        }
        if !(self.bounce_amplitude >= 0.0) {
            return bad("bounce_amplitude", "must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceCause {
    Init,
    Collision,
    VerticalBounce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceVelocity {
    pub v_ref: Vec3,
    pub t_issued: f64,
    pub cause: ReferenceCause,
}

fn unit_force(force: &Vec3) -> Result<Vec3> {
    let norm = force.norm();
    if norm <= DEFAULT_ZERO_FORCE {
        return Err(CioError::ZeroForce { magnitude: norm });
    }
    Ok(force / norm)
}

/// Mirror `v_prev` across the plane orthogonal to `force`.
pub fn specular_bounce(v_prev: &Vec3, force: &Vec3) -> Result<Vec3> {
    let n = unit_force(force)?;
    Ok(v_prev - n * (2.0 * n.dot(v_prev)))
}

/// Rotate the force direction by `dpsi` about `axis` (orthogonal to the
/// force) and scale to `v_nom`.
pub fn cone_about_axis(force: &Vec3, axis: &Vec3, dpsi: f64, v_nom: f64) -> Result<Vec3> {
    let f = unit_force(force)?;
    let e = axis.normalize();
    let (s, c) = dpsi.sin_cos();
    let v = f * c + e.cross(&f) * s + e * e.dot(&f) * (1.0 - c);
    Ok(v * (v_nom / v.norm()))
}

/// Direction at angle `dpsi` from the contact force, turned towards the
/// previous reference, with norm `v_nom`.
pub fn cone_bounce(v_prev_ref: &Vec3, force: &Vec3, dpsi: f64, v_nom: f64) -> Result<Vec3> {
    let f = unit_force(force)?;
    let cross = f.cross(v_prev_ref);
    if cross.norm() < 1e-9 * v_prev_ref.norm() || v_prev_ref.norm() == 0.0 {
        return Err(CioError::ParallelDegenerate);
    }
    cone_about_axis(force, &cross, dpsi, v_nom)
}

pub fn sample_cone_angle(rng: &mut ChaCha8Rng, cfg: &PlannerConfig) -> f64 {
    if cfg.dpsi_min == cfg.dpsi_max {
        return cfg.dpsi_min;
    }
    Uniform::new_inclusive(cfg.dpsi_min, cfg.dpsi_max)
        .expect("validated cone interval")
        .sample(rng)
}

/// Square wave: `+amplitude` in the first half of each period, `-amplitude` in the second.
pub fn vertical_bounce_reference(t: f64, cfg: &PlannerConfig) -> f64 {
    if t.rem_euclid(cfg.bounce_period) < 0.5 * cfg.bounce_period {
        cfg.bounce_amplitude
    } else {
        -cfg.bounce_amplitude
    }
}

#[derive(Debug, Clone)]
pub struct Planner {
    pub cfg: PlannerConfig,
    rng: ChaCha8Rng,
    current: ReferenceVelocity,
}

impl Planner {
    pub fn new(cfg: PlannerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
            current: ReferenceVelocity {
                v_ref: Vec3::new(cfg.v_nom, 0.0, 0.0),
                t_issued: 0.0,
                cause: ReferenceCause::Init,
            },
        })
    }

    pub fn current(&self) -> ReferenceVelocity {
        self.current
    }

    fn random_axis(&mut self, f: &Vec3) -> Vec3 {
        if self.cfg.planar {
            return if Uniform::new(0.0, 1.0).unwrap().sample(&mut self.rng) < 0.5 {
                Vec3::z()
            } else {
                -Vec3::z()
            };
        }
        let u = Unit::new_normalize(*f);
        let seed = if u.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let a = u.cross(&seed).normalize();
        let b = u.cross(&a);
        let phi = Uniform::new(0.0, std::f64::consts::TAU).unwrap().sample(&mut self.rng);
        a * phi.cos() + b * phi.sin()
    }

    /// New reference after a collision with world-frame force estimate `force`.
    /// Returns the unchanged reference when the force has no usable direction
    /// (for a planar planner, a purely vertical force).
    pub fn on_collision(&mut self, t: f64, force: &Vec3) -> Result<ReferenceVelocity> {
        let (force, prev) = if self.cfg.planar {
            let h = |v: &Vec3| Vec3::new(v.x, v.y, 0.0);
            (h(force), h(&self.current.v_ref))
        } else {
            (*force, self.current.v_ref)
        };
        if force.norm() <= DEFAULT_ZERO_FORCE {
            return Ok(self.current);
        }
        let v_ref = match self.cfg.rule {
            BounceRule::Specular => specular_bounce(&prev, &force)?,
            BounceRule::Cone => {
                let dpsi = sample_cone_angle(&mut self.rng, &self.cfg);
                match cone_bounce(&prev, &force, dpsi, self.cfg.v_nom) {
                    Err(CioError::ParallelDegenerate) => {
                        let axis = self.random_axis(&force);
                        cone_about_axis(&force, &axis, dpsi, self.cfg.v_nom)?
                    }
                    other => other?,
                }
            }
        };
        self.current = ReferenceVelocity {
            v_ref,
            t_issued: t,
            cause: ReferenceCause::Collision,
        };
        Ok(self.current)
    }

    /// Overrides the reference, e.g. to start from a commanded velocity.
    pub fn set_reference(&mut self, t: f64, v_ref: Vec3) -> ReferenceVelocity {
        self.current = ReferenceVelocity {
            v_ref,
            t_issued: t,
            cause: ReferenceCause::Init,
        };
        self.current
    }

    /// Vertical bounce behavior: horizontal reference zero, vertical square wave.
    pub fn vertical(&mut self, t: f64) -> ReferenceVelocity {
        let vz = vertical_bounce_reference(t, &self.cfg);
        if self.current.cause != ReferenceCause::VerticalBounce || self.current.v_ref.z != vz {
            self.current = ReferenceVelocity {
                v_ref: Vec3::new(0.0, 0.0, vz),
                t_issued: t,
                cause: ReferenceCause::VerticalBounce,
            };
        }
        self.current
    }
}
