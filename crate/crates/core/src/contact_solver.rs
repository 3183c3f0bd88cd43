//! Per-wheel contact forces and contact points from the total external wrench.
//!
//! Contacts happen on the wheel rims only, on the wheel mid-plane
//! (`p_y = 0`), and only one wheel carries a lateral force: the left wheel
//! when `F_y < 0`, the right wheel otherwise. Contact points are expressed in
//! each wheel's center frame.
//!
//! Under these assumptions the force balance and the roll and yaw moments
//! give the contact forces linearly in terms of the contact points, and the
//! wheel moments `M_w = p_z f_x - p_x f_z` reduce to one line per wheel,
//! `a x + b z + c = 0`, to be intersected with the rim circle of radius `R`.
//! Of the two intersections the solver keeps the lower one when the net
//! vertical contact force `F_z - m_t g` is non-negative and the upper one
//! otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{CioError, Result};
use crate::params::VehicleParams;
use crate::vehicle_model::Vec3;
use crate::wrench_estimator::WrenchEstimate;

pub const DISCRIMINANT_TOLERANCE: f64 = 1e-9;
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TotalWrench {
    pub force: Vec3,
    pub moment: Vec3,
    pub wheel_l: f64,
    pub wheel_r: f64,
}

impl TotalWrench {
    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.moment.iter()).all(|x| x.is_finite())
            && self.wheel_l.is_finite()
            && self.wheel_r.is_finite()
    }

    pub fn max_abs_diff(&self, other: &TotalWrench) -> f64 {
        (self.force - other.force)
            .amax()
            .max((self.moment - other.moment).amax())
            .max((self.wheel_l - other.wheel_l).abs())
            .max((self.wheel_r - other.wheel_r).abs())
    }
}

impl From<&WrenchEstimate> for TotalWrench {
    fn from(e: &WrenchEstimate) -> Self {
        Self {
            force: e.force,
            moment: e.moment,
            wheel_l: e.wheel_l,
            wheel_r: e.wheel_r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// The wheel that carries the lateral force.
    pub fn from_lateral_force(fy: f64) -> Self {
        if fy < 0.0 {
            Side::Left
        } else {
            Side::Right
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactSolution {
    pub f_l: Vec3,
    pub f_r: Vec3,
    pub p_l: Vec3,
    pub p_r: Vec3,
}

impl ContactSolution {
    pub fn lateral_side(&self) -> Option<Side> {
        match (self.f_l.y != 0.0, self.f_r.y != 0.0) {
            (true, false) => Some(Side::Left),
            (false, true) => Some(Side::Right),
            _ => None,
        }
    }

    pub fn max_abs_diff(&self, other: &ContactSolution) -> f64 {
        [
            self.f_l - other.f_l,
            self.f_r - other.f_r,
            self.p_l - other.p_l,
            self.p_r - other.p_r,
        ]
        .iter()
        .map(|d| d.amax())
        .fold(0.0, f64::max)
    }
}

pub fn sgn(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Total wrench produced by a pair of wheel contacts.
pub fn forward_wrench(s: &ContactSolution, p: &VehicleParams) -> TotalWrench {
    let l = p.half_shaft;
    let (fl, fr, pl, pr) = (&s.f_l, &s.f_r, &s.p_l, &s.p_r);
    TotalWrench {
        force: fl + fr + Vec3::new(0.0, 0.0, p.m_t * p.g),
        moment: Vec3::new(
            l * (fl.z - fr.z) - pl.z * fl.y - pr.z * fr.y,
            wheel_moment(pl, fl) + wheel_moment(pr, fr),
            l * (fr.x - fl.x) + pl.x * fl.y + pr.x * fr.y,
        ),
        wheel_l: wheel_moment(pl, fl),
        wheel_r: wheel_moment(pr, fr),
    }
}

pub fn wheel_moment(point: &Vec3, force: &Vec3) -> f64 {
    point.z * force.x - point.x * force.z
}

/// Point on the rim at angle `theta` from the bottom, positive forward.
pub fn rim_point(theta: f64, radius: f64) -> Vec3 {
    Vec3::new(radius * theta.sin(), 0.0, -radius * theta.cos())
}

/// Contact forces once the point on the lateral-force wheel is known.
fn forces_given_lateral_point(w: &TotalWrench, side: Side, point: &Vec3, p: &VehicleParams) -> (Vec3, Vec3) {
    let l = p.half_shaft;
    let (fx, fy) = (w.force.x, w.force.y);
    let fz = w.force.z - p.m_t * p.g;
    let (mx, mz) = (w.moment.x, w.moment.z);
    match side {
        Side::Left => {
            let left = Vec3::new(
                0.5 * (fx - (mz - point.x * fy) / l),
                fy,
                0.5 * (fz + (mx + point.z * fy) / l),
            );
            (left, Vec3::new(fx - left.x, 0.0, fz - left.z))
        }
        Side::Right => {
            let right = Vec3::new(
                0.5 * (fx + (mz - point.x * fy) / l),
                fy,
                0.5 * (fz - (mx + point.z * fy) / l),
            );
            (Vec3::new(fx - right.x, 0.0, fz - right.z), right)
        }
    }
}

/// Intersection of `a x + b z + c = 0` with the circle of radius `r`, choosing
/// the lower root when `vertical >= 0`.
pub fn line_circle_root(a: f64, b: f64, c: f64, r: f64, vertical: f64) -> Result<(f64, f64)> {
    let n = a * a + b * b;
    if n < DEGENERACY_TOLERANCE {
        return Err(CioError::DegenerateWrench { norm: n.sqrt() });
    }
    let disc = r * r * n - c * c;
    if disc < -DISCRIMINANT_TOLERANCE {
        return Err(CioError::NoRealSolution { discriminant: disc });
    }
    let root = disc.max(0.0).sqrt();
    let z = (-b * c - sgn(vertical) * a.abs() * root) / n;
    let x = (-a * c + sgn(vertical) * sgn(a) * b * root) / n;
    Ok((x, z))
}

/// Closed-form contact estimate.
pub fn estimate_contact(w: &TotalWrench, p: &VehicleParams) -> Result<ContactSolution> {
    if !w.is_finite() {
        return Err(CioError::NonFiniteState { what: "total wrench" });
    }
    let (l, r) = (p.half_shaft, p.wheel_radius);
    let fx = w.force.x;
    let fz = w.force.z - p.m_t * p.g;
    let (mx, mz) = (w.moment.x, w.moment.z);
    let side = Side::from_lateral_force(w.force.y);
    let (a, b, c) = match side {
        Side::Left => (mx + l * fz, mz - l * fx, 2.0 * l * w.wheel_l),
        Side::Right => (mx - l * fz, mz + l * fx, -2.0 * l * w.wheel_r),
    };
    let solve_from = |x: f64, z: f64| {
        let first = Vec3::new(x, 0.0, z);
        let (f_l, f_r) = forces_given_lateral_point(w, side, &first, p);
        // Second wheel: M_w = f_x z - f_z x with its force now known.
        let (force, moment) = match side {
            Side::Left => (f_r, w.wheel_r),
            Side::Right => (f_l, w.wheel_l),
        };
        let (x2, z2) = line_circle_root(-force.z, force.x, -moment, r, fz)?;
        let second = Vec3::new(x2, 0.0, z2);
        let (p_l, p_r) = match side {
            Side::Left => (first, second),
            Side::Right => (second, first),
        };
        Ok(ContactSolution { f_l, f_r, p_l, p_r })
    };
    let (x, z) = line_circle_root(a, b, c, r, fz)?;
    match solve_from(x, z) {
        // The preferred point on the first wheel can leave the second wheel
        // without a solution; the other intersection is then the only candidate.
        Err(CioError::NoRealSolution { .. }) => {
            let (x, z) = line_circle_root(a, b, c, r, -sgn(fz))?;
            solve_from(x, z)
        }
        other => other,
    }
}

const GRID_STEP: f64 = 1e-3;
const REFINE_TOLERANCE: f64 = 1e-9;

/// Angles on the full rim where `residual` vanishes: sign changes on a
/// `1e-3` rad grid refined by bisection, plus tangential touches refined by
/// golden-section search on `|residual|`.
fn rim_roots(residual: impl Fn(f64) -> f64, tolerance: f64) -> Vec<f64> {
    let n = (2.0 * std::f64::consts::PI / GRID_STEP).ceil() as usize;
    let theta = |k: usize| -std::f64::consts::PI + k as f64 * 2.0 * std::f64::consts::PI / n as f64;
    let values: Vec<f64> = (0..=n).map(|k| residual(theta(k))).collect();
    let mut roots = Vec::new();
    for k in 0..n {
        let (mut lo, mut hi) = (theta(k), theta(k + 1));
        let (mut flo, fhi) = (values[k], values[k + 1]);
        if flo == 0.0 {
            roots.push(lo);
            continue;
        }
        if flo * fhi < 0.0 {
            while hi - lo > REFINE_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                let fm = residual(mid);
                if fm * flo > 0.0 {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
    }
    for k in 1..n {
        let (prev, here, next) = (values[k - 1].abs(), values[k].abs(), values[k + 1].abs());
        let no_crossing = values[k - 1] * values[k] > 0.0 && values[k] * values[k + 1] > 0.0;
        if no_crossing && here <= prev && here <= next {
            let t = golden_min(|t| residual(t).abs(), theta(k - 1), theta(k + 1));
            if residual(t).abs() < tolerance {
                roots.push(t);
            }
        }
    }
    roots
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    while b - a > REFINE_TOLERANCE {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - ratio * (b - a);
        d = a + ratio * (b - a);
    }
    0.5 * (a + b)
}

/// Among rim candidates keep the lowest point when `vertical >= 0`, the highest otherwise.
fn pick_by_height(candidates: &[f64], radius: f64, vertical: f64) -> Option<f64> {
    candidates
        .iter()
        .copied()
        .min_by(|a, b| {
            let za = sgn(vertical) * rim_point(*a, radius).z;
            let zb = sgn(vertical) * rim_point(*b, radius).z;
            za.total_cmp(&zb)
        })
}

/// Numerical contact estimate by scanning both rim angles; a testing oracle
/// for [`estimate_contact`].
pub fn brute_force_contact(w: &TotalWrench, p: &VehicleParams) -> Result<ContactSolution> {
    if !w.is_finite() {
        return Err(CioError::NonFiniteState { what: "total wrench" });
    }
    let r = p.wheel_radius;
    let vertical = w.force.z - p.m_t * p.g;
    let side = Side::from_lateral_force(w.force.y);
    let scale = 1.0 + w.force.norm() + w.moment.norm() + w.wheel_l.abs() + w.wheel_r.abs();
    let accept = 1e-6 * scale;

    let first_residual = |theta: f64| {
        let point = rim_point(theta, r);
        let (f_l, f_r) = forces_given_lateral_point(w, side, &point, p);
        match side {
            Side::Left => wheel_moment(&point, &f_l) - w.wheel_l,
            Side::Right => wheel_moment(&point, &f_r) - w.wheel_r,
        }
    };
    let solve_from = |first: Vec3| {
        let (f_l, f_r) = forces_given_lateral_point(w, side, &first, p);
        let (force, moment) = match side {
            Side::Left => (f_r, w.wheel_r),
            Side::Right => (f_l, w.wheel_l),
        };
        let second_residual = |theta: f64| wheel_moment(&rim_point(theta, r), &force) - moment;
        let second = pick_by_height(&rim_roots(second_residual, accept), r, vertical)
            .map(|t| rim_point(t, r))?;
        let (p_l, p_r) = match side {
            Side::Left => (first, second),
            Side::Right => (second, first),
        };
        Some(ContactSolution { f_l, f_r, p_l, p_r })
    };
    let mut candidates: Vec<Vec3> = rim_roots(first_residual, accept)
        .into_iter()
        .map(|t| rim_point(t, r))
        .collect();
    candidates.sort_by(|a, b| (sgn(vertical) * a.z).total_cmp(&(sgn(vertical) * b.z)));
    let solution = candidates
        .into_iter()
        .find_map(solve_from)
        .ok_or(CioError::NoRealSolution { discriminant: f64::NAN })?;
    let mismatch = forward_wrench(&solution, p).max_abs_diff(w);
    if mismatch > RECONSTRUCTION_TOLERANCE * scale {
        return Err(CioError::NoRealSolution { discriminant: -mismatch });
    }
    Ok(solution)
}
