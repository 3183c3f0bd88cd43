//! Physical constants of the hybrid rolling/flying vehicle.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CioError, Result};

/// Masses, inertias, geometry, rotor coefficients and observer gains.
///
/// Defaults are the Rollocopter values (8 propellers, two passive wheels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// Total mass, kg.
    pub m_t: f64,
    /// Mass of one wheel, kg.
    pub m_w: f64,
    /// Diagonal of the total inertia, kg m^2.
    pub i_t: [f64; 3],
    /// Diagonal of the body (wheel-less) inertia, kg m^2.
    pub i_b: [f64; 3],
    /// Wheel inertia about the axle, kg m^2.
    pub i_w: f64,
    /// Propeller diameter, m.
    pub prop_diameter: f64,
    /// Thrust coefficient (dimensionless).
    pub c_p: f64,
    /// Torque coefficient (dimensionless).
    pub c_q: f64,
    /// Air density, kg/m^3.
    pub rho: f64,
    /// Wheel radius, m.
    pub wheel_radius: f64,
    /// Rotor arm length, m.
    pub arm_length: f64,
    /// Half length of the wheel shaft, m.
    pub half_shaft: f64,
    /// Force observer gain, 1/s.
    pub k_f: f64,
    /// Moment observer gain, 1/s.
    pub k_m: f64,
    /// Wheel moment observer gain, 1/s.
    pub k_w: f64,
    /// Gravity magnitude, m/s^2.
    pub g: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m_t: 4.036,
            m_w: 0.283,
            i_t: [0.09, 0.074, 0.09],
            i_b: [0.035, 0.0545, 0.035],
            i_w: 0.00975,
            prop_diameter: 0.2286,
            c_p: 0.11,
            c_q: 0.008,
            rho: 1.18,
            wheel_radius: 0.2667,
            arm_length: 0.254,
            half_shaft: 0.3125,
            k_f: 10.0,
            k_m: 10.0,
            k_w: 10.0,
            g: 9.81,
        }
    }
}

impl VehicleParams {
    /// Rotor thrust coefficient `rho * C_p * D^4`.
    pub fn c_thrust(&self) -> f64 {
        self.rho * self.c_p * self.prop_diameter.powi(4)
    }

    /// Rotor drag-torque coefficient `rho * C_q * D^5`.
    pub fn c_torque(&self) -> f64 {
        self.rho * self.c_q * self.prop_diameter.powi(5)
    }

    pub fn total_inertia(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.i_t))
    }

    pub fn body_inertia(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.i_b))
    }

    /// The same airframe with massless wheels: the multibody terms vanish and
    /// the body inertia coincides with the total inertia.
    pub fn without_wheels(&self) -> Self {
        Self {
            m_w: 0.0,
            i_w: 0.0,
            i_b: self.i_t,
            ..*self
        }
    }

    /// True when the wheel terms are switched off.
    pub fn is_wheelless(&self) -> bool {
        self.m_w == 0.0 && self.i_w == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, f64); 12] = [
            ("m_t", self.m_t),
            ("prop_diameter", self.prop_diameter),
            ("c_p", self.c_p),
            ("c_q", self.c_q),
            ("rho", self.rho),
            ("wheel_radius", self.wheel_radius),
            ("arm_length", self.arm_length),
            ("half_shaft", self.half_shaft),
            ("k_f", self.k_f),
            ("k_m", self.k_m),
            ("k_w", self.k_w),
            ("g", self.g),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CioError::InvalidParameter {
                    name,
                    reason: format!("must be strictly positive, got {v}"),
                });
            }
        }
        for (name, arr) in [("i_t", self.i_t), ("i_b", self.i_b)] {
            if arr.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(CioError::InvalidParameter {
                    name,
                    reason: format!("all diagonal entries must be strictly positive, got {arr:?}"),
                });
            }
        }
        // Wheel mass and inertia may be zero together (plain quadrotor), never negative.
        for (name, v) in [("m_w", self.m_w), ("i_w", self.i_w)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CioError::InvalidParameter {
                    name,
                    reason: format!("must be non-negative, got {v}"),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_values_are_valid() {
        let p = VehicleParams::default();
        p.validate().unwrap();
        assert!(p.c_thrust() > 0.0 && p.c_torque() > 0.0);
        // rho * C_p * D^4 with the shipped constants
        assert!((p.c_thrust() - 1.18 * 0.11 * 0.2286_f64.powi(4)).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_positive_mass() {
        let p = VehicleParams {
            m_t: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            p.validate(),
            Err(CioError::InvalidParameter { name: "m_t", .. })
        ));
    }

    #[test]
    fn wheelless_copy_is_valid() {
        let p = VehicleParams::default().without_wheels();
        p.validate().unwrap();
        assert!(p.is_wheelless());
        assert_eq!(p.i_b, p.i_t);
    }
}
