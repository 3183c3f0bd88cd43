//! Oracle-equivalence suite behind `cio validate`.

use nalgebra::{Matrix3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cio_filter::parallel_velocity;
use crate::contact_solver::{brute_force_contact, estimate_contact, forward_wrench, rim_point, ContactSolution};
use crate::reactive_planner::{cone_bounce, specular_bounce};
use crate::vehicle_model::{quadrotor_derivative, rollocopter_derivative, ControlWrench, ExternalWrench, RigidState, Vec3};
use crate::wrench_estimator::{update_flying, ImuSample, WrenchEstimate};
use crate::VehicleParams;

/// Deliberate faults for checking that the suite catches regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// The analytic contact solver sees a wheel radius 1% too large.
    ContactSolver,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub cases: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &'static str, cases: usize, max_residual: f64, tolerance: f64) -> Self {
        Self {
            name,
            cases,
            max_residual,
            tolerance,
            passed: max_residual.is_finite() && max_residual < tolerance,
        }
    }
}

fn random_vec(rng: &mut impl Rng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

fn nonzero_vec(rng: &mut impl Rng, scale: f64) -> Vec3 {
    loop {
        let v = random_vec(rng, scale);
        if v.norm() > 1e-3 * scale {
            return v;
        }
    }
}

fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

fn contact_pair(rng: &mut impl Rng, p: &VehicleParams) -> ContactSolution {
    let mut wheel = || {
        let theta = rng.random_range(-1.4..1.4);
        let point = rim_point(theta, p.wheel_radius);
        let tangent = Vec3::new(theta.cos(), 0.0, theta.sin());
        let push = rng.random_range(1.0..30.0);
        let slide = rng.random_range(-0.8..=0.8) * push;
        (-point / p.wheel_radius * push + tangent * slide, point)
    };
    let (mut f_l, p_l) = wheel();
    let (mut f_r, p_r) = wheel();
    let lateral = rng.random_range(0.5..20.0);
    if rng.random_bool(0.5) {
        f_l.y = -lateral;
    } else {
        f_r.y = lateral;
    }
    ContactSolution { f_l, f_r, p_l, p_r }
}

fn contact_solver(rng: &mut ChaCha8Rng, fault: Fault) -> Check {
    let p = VehicleParams::default();
    let analytic = match fault {
        Fault::ContactSolver => VehicleParams {
            wheel_radius: p.wheel_radius * 1.01,
            ..p
        },
        Fault::None => p,
    };
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let w = forward_wrench(&contact_pair(rng, &p), &p);
        let residual = match (estimate_contact(&w, &analytic), brute_force_contact(&w, &p)) {
            (Ok(a), Ok(b)) => a.max_abs_diff(&b),
            _ => f64::INFINITY,
        };
        worst = worst.max(residual);
    }
    Check::new("contact solver vs brute force", 1000, worst, 1e-6)
}

fn rodrigues(axis: &Vec3, angle: f64) -> Matrix3<f64> {
    let k = axis.normalize();
    let skew = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + skew * angle.sin() + skew * skew * (1.0 - angle.cos())
}

fn rotations(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let axis = nonzero_vec(rng, 1.0);
        let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let v = random_vec(rng, 10.0);
        let q = UnitQuaternion::from_scaled_axis(axis.normalize() * angle);
        worst = worst.max((q * v - rodrigues(&axis, angle) * v).amax());
    }
    Check::new("quaternion rotation vs Rodrigues matrix", 10_000, worst, 1e-12)
}

fn observer_step() -> Check {
    const DT: f64 = 0.005;
    let mut worst = 0.0f64;
    let mut cases = 0;
    for k in [1.0, 10.0, 100.0] {
        let p = VehicleParams {
            k_f: k,
            ..VehicleParams::default()
        };
        let u = ControlWrench::new(0.0, Vec3::zeros());
        let mut est = WrenchEstimate::default();
        for i in 0..=((5.0 / k / DT).round() as usize) {
            let t = i as f64 * DT;
            let imu = ImuSample {
                t,
                accel: Vec3::new(1.0 / p.m_t, 0.0, 0.0),
                gyro: Vec3::zeros(),
            };
            est = update_flying(&est, &imu, None, &u, DT, &p);
            worst = worst.max((est.force.x - (1.0 - (-k * t).exp())).abs());
            cases += 1;
        }
    }
    Check::new("force observer step vs 1 - exp(-K t)", cases, worst, 1e-6)
}

fn projection(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let v = random_vec(rng, 10.0);
        let f = nonzero_vec(rng, 50.0);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let pv = parallel_velocity(&v, &f).expect("non-zero force");
        let idem = (parallel_velocity(&pv, &f).expect("non-zero force") - pv).amax();
        let inv = (parallel_velocity(&v, &(f * scale)).expect("non-zero force") - pv).amax();
        worst = worst.max((pv.dot(&f) / f.norm()).abs()).max(idem).max(inv);
    }
    Check::new("parallel velocity projection", 10_000, worst, 1e-9)
}

fn bounce_rules(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    let mut cases = 0;
    while cases < 10_000 {
        let v = nonzero_vec(rng, 5.0);
        let f = nonzero_vec(rng, 50.0);
        if angle_between(&v, &f).sin() < 1e-3 {
            continue;
        }
        cases += 1;
        let dpsi = rng.random_range(0.0..std::f64::consts::FRAC_PI_2);
        let c = cone_bounce(&v, &f, dpsi, 1.0).expect("non-parallel inputs");
        let s = specular_bounce(&v, &f).expect("non-zero force");
        let back = specular_bounce(&s, &f).expect("non-zero force");
        worst = worst
            .max((c.norm() - 1.0).abs())
            .max((angle_between(&c, &f) - dpsi).abs())
            .max((s.norm() - v.norm()).abs())
            .max((back - v).amax());
    }
    Check::new("cone and specular bounce geometry", cases, worst, 1e-9)
}

fn wheelless_dynamics(rng: &mut ChaCha8Rng) -> Check {
    let p = VehicleParams::default().without_wheels();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let s = RigidState {
            r: random_vec(rng, 10.0),
            q: UnitQuaternion::from_scaled_axis(random_vec(rng, 2.0)),
            v: random_vec(rng, 5.0),
            omega: random_vec(rng, 5.0),
            gamma_l: rng.random_range(-50.0..50.0),
            gamma_r: rng.random_range(-50.0..50.0),
        };
        let u = ControlWrench::new(rng.random_range(0.0..60.0), random_vec(rng, 2.0));
        let ext = ExternalWrench {
            force: random_vec(rng, 20.0),
            moment: random_vec(rng, 2.0),
            ..Default::default()
        };
        let a = quadrotor_derivative(&s, &u, &ext.force, &ext.moment, &p);
        let residual = match rollocopter_derivative(&s, &u, &ext, &p) {
            Ok(b) => (a.v_dot - b.v_dot)
                .amax()
                .max((a.omega_dot - b.omega_dot).amax())
                .max((a.r_dot - b.r_dot).amax())
                .max((a.q_dot.coords - b.q_dot.coords).amax()),
            Err(_) => f64::INFINITY,
        };
        worst = worst.max(residual);
    }
    Check::new("wheelless dynamics vs rigid body", 1000, worst, 1e-12)
}

pub fn run_checks(fault: Fault) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    vec![
        projection(&mut rng),
        contact_solver(&mut rng, fault),
        rotations(&mut rng),
        observer_step(),
        bounce_rules(&mut rng),
        wheelless_dynamics(&mut rng),
    ]
}
