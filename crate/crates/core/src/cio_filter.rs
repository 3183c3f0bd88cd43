//! Error-state EKF on position, attitude, body velocity and body rate, with
//! the collision pseudo-measurement: after an impact the velocity component
//! along the contact force is assumed to vanish.

use nalgebra::{Matrix3, SMatrix, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CioError, Result};
use crate::vehicle_model::Vec3;
use crate::wrench_estimator::ImuSample;

pub type Matrix12 = SMatrix<f64, 12, 12>;
pub type Vector12 = SVector<f64, 12>;
pub type Vector13 = SVector<f64, 13>;

pub const DEFAULT_ZERO_FORCE: f64 = 1e-6;
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

// error-state block offsets
const POS: usize = 0;
const ATT: usize = 3;
const VEL: usize = 6;
const RATE: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub t: f64,
    pub r: Vec3,
    /// Body to world.
    pub q: UnitQuaternion<f64>,
    /// Body frame.
    pub v: Vec3,
    pub omega: Vec3,
    /// Covariance of `[dr, dtheta, dv, domega]`, attitude error in the body frame.
    pub p: Matrix12,
}

impl FilterState {
    pub fn new(t: f64, r: Vec3, q: UnitQuaternion<f64>, v: Vec3, p: Matrix12) -> Self {
        Self {
            t,
            r,
            q,
            v,
            omega: Vec3::zeros(),
            p,
        }
    }

    /// `[r; q (w, i, j, k); v; omega]`.
    pub fn mean(&self) -> Vector13 {
        let q = self.q.quaternion();
        let mut x = Vector13::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.r);
        x[3] = q.w;
        x[4] = q.i;
        x[5] = q.j;
        x[6] = q.k;
        x.fixed_rows_mut::<3>(7).copy_from(&self.v);
        x.fixed_rows_mut::<3>(10).copy_from(&self.omega);
        x
    }

    pub fn world_velocity(&self) -> Vec3 {
        self.q * self.v
    }

    pub fn velocity_covariance(&self) -> Matrix3<f64> {
        self.p.fixed_view::<3, 3>(VEL, VEL).into_owned()
    }

    pub fn velocity_trace(&self) -> f64 {
        self.velocity_covariance().trace()
    }

    pub fn is_finite(&self) -> bool {
        self.mean().iter().all(|x| x.is_finite()) && self.p.iter().all(|x| x.is_finite())
    }
}

/// Noise densities for position, attitude and velocity, so the discrete
/// covariance is `density * dt`. `rate` is the gyro variance per sample: the
/// rate state is overwritten by every gyro reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessNoise {
    pub position: f64,
    pub attitude: f64,
    pub velocity: f64,
    pub rate: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self {
            position: 1e-4,
            attitude: 1e-6,
            velocity: 0.1,
            rate: 4e-6,
        }
    }
}

impl ProcessNoise {
    pub fn covariance(&self, dt: f64) -> Matrix12 {
        let mut d = Vector12::zeros();
        for (block, value) in [
            (POS, self.position),
            (ATT, self.attitude),
            (VEL, self.velocity),
        ] {
            d.fixed_rows_mut::<3>(block).fill(value * dt);
        }
        d.fixed_rows_mut::<3>(RATE).fill(self.rate);
        Matrix12::from_diagonal(&d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementNoise {
    Isotropic { sigma: f64 },
    /// Tangential directions get `tangential_factor` times the variance of the
    /// direction along the contact force.
    Anisotropic { sigma: f64, tangential_factor: f64 },
}

impl Default for MeasurementNoise {
    fn default() -> Self {
        MeasurementNoise::Isotropic { sigma: 0.05 }
    }
}

impl MeasurementNoise {
    pub fn covariance(&self, force: &Vec3) -> Matrix3<f64> {
        match *self {
            MeasurementNoise::Isotropic { sigma } => Matrix3::identity() * sigma * sigma,
            MeasurementNoise::Anisotropic {
                sigma,
                tangential_factor,
            } => {
                let n = force.normalize();
                let along = n * n.transpose();
                (along + (Matrix3::identity() - along) * tangential_factor) * sigma * sigma
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoMeasurement {
    pub z: Vec3,
    pub r: Matrix3<f64>,
}

fn skew(v: &Vec3) -> Matrix3<f64> {
    v.cross_matrix()
}

/// Strapdown prediction with the IMU sample held over `dt`.
pub fn predict(fs: &FilterState, imu: &ImuSample, q: &Matrix12, dt: f64, gravity: f64) -> Result<FilterState> {
    if dt <= 0.0 {
        return Err(CioError::InvalidParameter {
            name: "dt",
            reason: format!("must be positive, got {dt}"),
        });
    }
    let rot = fs.q.to_rotation_matrix().into_inner();
    let omega = imu.gyro;
    let g_body = rot.transpose() * Vec3::new(0.0, 0.0, -gravity);
    let v_dot = imu.accel + g_body - omega.cross(&fs.v);
    let v = fs.v + v_dot * dt;
    let r = fs.r + rot * (fs.v + v) * (0.5 * dt);
    let attitude = fs.q * UnitQuaternion::from_scaled_axis(omega * dt);

    let mut a = Matrix12::zeros();
    a.fixed_view_mut::<3, 3>(POS, VEL).copy_from(&rot);
    a.fixed_view_mut::<3, 3>(POS, ATT).copy_from(&(-rot * skew(&fs.v)));
    a.fixed_view_mut::<3, 3>(ATT, ATT).copy_from(&(-skew(&omega)));
    a.fixed_view_mut::<3, 3>(ATT, RATE).copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(VEL, ATT).copy_from(&skew(&g_body));
    a.fixed_view_mut::<3, 3>(VEL, VEL).copy_from(&(-skew(&omega)));
    a.fixed_view_mut::<3, 3>(VEL, RATE).copy_from(&skew(&fs.v));
    let f = Matrix12::identity() + a * dt;
    let mut p = f * fs.p * f.transpose();
    p.fixed_view_mut::<12, 3>(0, RATE).fill(0.0);
    p.fixed_view_mut::<3, 12>(RATE, 0).fill(0.0);
    let p = symmetrize(&(p + q));

    let next = FilterState {
        t: fs.t + dt,
        r,
        q: attitude,
        v,
        omega,
        p,
    };
    if !next.is_finite() {
        return Err(CioError::NonFiniteState { what: "filter state" }.at(next.t));
    }
    Ok(next)
}

fn symmetrize(p: &Matrix12) -> Matrix12 {
    (p + p.transpose()) * 0.5
}

/// Component of `v_prev` orthogonal to `force`.
pub fn parallel_velocity(v_prev: &Vec3, force: &Vec3) -> Result<Vec3> {
    parallel_velocity_eps(v_prev, force, DEFAULT_ZERO_FORCE)
}

pub fn parallel_velocity_eps(v_prev: &Vec3, force: &Vec3, eps: f64) -> Result<Vec3> {
    let norm = force.norm();
    if norm <= eps {
        return Err(CioError::ZeroForce { magnitude: norm });
    }
    let n = force / norm;
    Ok(v_prev - n * n.dot(v_prev))
}

pub fn pseudo_measurement(fs: &FilterState, force: &Vec3, noise: &MeasurementNoise) -> Result<PseudoMeasurement> {
    Ok(PseudoMeasurement {
        z: parallel_velocity(&fs.v, force)?,
        r: noise.covariance(force),
    })
}

/// Kalman update with a direct measurement of body velocity.
pub fn velocity_update(fs: &FilterState, m: &PseudoMeasurement) -> Result<FilterState> {
    let p_vv = fs.velocity_covariance();
    let s = p_vv + m.r;
    let s = (s + s.transpose()) * 0.5;
    let eig = s.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_INNOVATION_CONDITION) {
        return Err(CioError::IllConditionedInnovation { condition }.at(fs.t));
    }
    let s_inv = s.try_inverse().ok_or(CioError::IllConditionedInnovation { condition })?;
    let p_xh: SMatrix<f64, 12, 3> = fs.p.fixed_view::<12, 3>(0, VEL).into_owned();
    let gain = p_xh * s_inv;
    let dx = gain * (m.z - fs.v);

    let mut ikh = Matrix12::identity();
    let mut block = ikh.fixed_view_mut::<12, 3>(0, VEL);
    block -= gain;
    let p = symmetrize(&(ikh * fs.p * ikh.transpose() + gain * m.r * gain.transpose()));

    let delta_theta: Vector3<f64> = dx.fixed_rows::<3>(ATT).into_owned();
    Ok(FilterState {
        t: fs.t,
        r: fs.r + dx.fixed_rows::<3>(POS),
        q: fs.q * UnitQuaternion::from_scaled_axis(delta_theta),
        v: fs.v + dx.fixed_rows::<3>(VEL),
        omega: fs.omega + dx.fixed_rows::<3>(RATE),
        p,
    })
}

/// Collision update: the measured velocity is the current estimate with its
/// component along the contact force removed.
pub fn contact_update(fs: &FilterState, force: &Vec3, r: &Matrix3<f64>) -> Result<FilterState> {
    let z = parallel_velocity(&fs.v, force)?;
    velocity_update(fs, &PseudoMeasurement { z, r: *r })
}

pub fn zero_velocity_update(fs: &FilterState, r: &Matrix3<f64>) -> Result<FilterState> {
    velocity_update(
        fs,
        &PseudoMeasurement {
            z: Vec3::zeros(),
            r: *r,
        },
    )
}

/// When a detected collision is turned into a filter update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UpdateTrigger {
    /// Immediately, with the force estimate at detection.
    AtDetection,
    /// When the force-estimate norm first decreases after detection, using
    /// the largest estimate seen, or after `timeout` seconds.
    AtForcePeak { timeout: f64 },
}

impl Default for UpdateTrigger {
    fn default() -> Self {
        UpdateTrigger::AtForcePeak { timeout: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    since: f64,
    force: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateScheduler {
    pub trigger: UpdateTrigger,
    pending: Option<Pending>,
}

impl UpdateScheduler {
    pub fn new(trigger: UpdateTrigger) -> Self {
        Self {
            trigger,
            pending: None,
        }
    }

    pub fn is_pending(&self) -> bool {
        self.pending.is_some()
    }

    /// Registers a detection; returns the force to update with now, if any.
    pub fn on_detection(&mut self, t: f64, force: Vec3) -> Option<Vec3> {
        match self.trigger {
            UpdateTrigger::AtDetection => Some(force),
            UpdateTrigger::AtForcePeak { .. } => {
                if self.pending.is_none() {
                    self.pending = Some(Pending { since: t, force });
                }
                None
            }
        }
    }

    /// Feeds the latest force estimate; returns the force to update with once
    /// the pending event is due.
    pub fn on_estimate(&mut self, t: f64, force: Vec3) -> Option<Vec3> {
        let UpdateTrigger::AtForcePeak { timeout } = self.trigger else {
            return None;
        };
        let pending = self.pending.as_mut()?;
        if force.norm() < pending.force.norm() || t - pending.since >= timeout {
            let best = if force.norm() > pending.force.norm() { force } else { pending.force };
            self.pending = None;
            return Some(best);
        }
        pending.force = force;
        None
    }
}
