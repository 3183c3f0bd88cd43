//! Cascaded flight control: velocity to acceleration, acceleration to thrust
//! and attitude, attitude to body moment.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{CioError, Result};
use crate::params::VehicleParams;
use crate::vehicle_model::{ControlWrench, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerGains {
    pub kp_vel: f64,
    pub kp_att: f64,
    pub kd_att: f64,
    pub yaw_ref: f64,
    /// Cap on the horizontal commanded acceleration, m/s^2.
    pub a_max: f64,
    pub kp_height: f64,
    pub kd_height: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            kp_vel: 2.5,
            kp_att: 25.0,
            kd_att: 2.4,
            yaw_ref: 0.0,
            a_max: 5.0,
            kp_height: 4.0,
            kd_height: 3.0,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("kp_vel", self.kp_vel),
            ("kp_att", self.kp_att),
            ("kd_att", self.kd_att),
            ("a_max", self.a_max),
            ("kp_height", self.kp_height),
            ("kd_height", self.kd_height),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(CioError::InvalidParameter {
                    name,
                    reason: format!("gain must be positive, got {value}"),
                });
            }
        }
        Ok(())
    }
}

/// `kp (v_ref - v_est)` with the horizontal part capped, plus gravity compensation.
pub fn velocity_to_acceleration(v_ref: &Vec3, v_est: &Vec3, gains: &ControllerGains, gravity: f64) -> Vec3 {
    let mut a = (v_ref - v_est) * gains.kp_vel;
    let horizontal = a.xy().norm();
    if horizontal > gains.a_max {
        let s = gains.a_max / horizontal;
        a.x *= s;
        a.y *= s;
    }
    a.z += gravity;
    a
}

/// Vertical acceleration command holding `z_ref` from a direct height reading.
pub fn height_hold_acceleration(z_ref: f64, z: f64, vz: f64, gains: &ControllerGains, gravity: f64) -> f64 {
    gains.kp_height * (z_ref - z) - gains.kd_height * vz + gravity
}

/// Thrust magnitude and attitude whose body z axis points along `a_des`.
pub fn acceleration_to_attitude_thrust(
    a_des: &Vec3,
    yaw: f64,
    p: &VehicleParams,
) -> Result<(f64, UnitQuaternion<f64>)> {
    let norm = a_des.norm();
    if !(norm >= 0.1 * p.g) {
        return Err(CioError::DegenerateAcceleration { magnitude: norm });
    }
    let b3 = a_des / norm;
    let heading = Vec3::new(yaw.cos(), yaw.sin(), 0.0);
    let side = b3.cross(&heading);
    let b2 = if side.norm() > 1e-9 {
        side.normalize()
    } else {
        b3.cross(&Vec3::new(-yaw.sin(), yaw.cos(), 0.0)).normalize() * -1.0
    };
    let b1 = b2.cross(&b3);
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[b1, b2, b3]));
    Ok((p.m_t * norm, UnitQuaternion::from_rotation_matrix(&rot)))
}

/// Quaternion-error PD: `M = 2 kp vec(q^-1 q_des) - kd omega`, shortest rotation.
pub fn attitude_rate_controller(
    q_des: &UnitQuaternion<f64>,
    q: &UnitQuaternion<f64>,
    omega: &Vec3,
    gains: &ControllerGains,
) -> Vec3 {
    let err = (q.inverse() * q_des).into_inner();
    let sign = if err.w < 0.0 { -1.0 } else { 1.0 };
    err.vector() * (2.0 * gains.kp_att * sign) - omega * gains.kd_att
}

/// Full cascade for one attitude tick given an acceleration command.
pub fn control_wrench(
    a_des: &Vec3,
    q: &UnitQuaternion<f64>,
    omega: &Vec3,
    gains: &ControllerGains,
    p: &VehicleParams,
) -> Result<ControlWrench> {
    let (thrust, q_des) = acceleration_to_attitude_thrust(a_des, gains.yaw_ref, p)?;
    Ok(ControlWrench::new(thrust, attitude_rate_controller(&q_des, q, omega, gains)))
}
