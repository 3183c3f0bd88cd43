//! Rigid-body dynamics of the plain quadrotor and of the hybrid rolling/flying
//! vehicle, rotor mixing, and the fixed-step integrator.
//!
//! Conventions: `v` and `omega` are body-frame, `r` is world-frame (z up) and
//! `q` rotates body-frame vectors into the world frame. Gravity is modelled
//! explicitly and is never part of the external wrench.

use nalgebra::{Matrix3, Matrix5, Quaternion, SMatrix, SVector, UnitQuaternion, Vector3, Vector4, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::{CioError, Result};
use crate::params::VehicleParams;

pub type Vec3 = Vector3<f64>;

/// Rotor speed saturation, rad/s.
pub const MAX_ROTOR_SPEED: f64 = 1500.0;
/// Negative squared speeds above this magnitude make an allocation infeasible.
pub const ALLOCATION_TOLERANCE: f64 = 1e-9;
/// Condition number beyond which the assembled mass matrix counts as singular.
pub const MAX_INERTIA_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidState {
    pub r: Vec3,
    pub q: UnitQuaternion<f64>,
    pub v: Vec3,
    pub omega: Vec3,
    pub gamma_l: f64,
    pub gamma_r: f64,
}

impl Default for RigidState {
    fn default() -> Self {
        Self {
            r: Vec3::zeros(),
            q: UnitQuaternion::identity(),
            v: Vec3::zeros(),
            omega: Vec3::zeros(),
            gamma_l: 0.0,
            gamma_r: 0.0,
        }
    }
}

impl RigidState {
    pub fn at_rest(r: Vec3) -> Self {
        Self {
            r,
            ..Default::default()
        }
    }

    /// Velocity expressed in the world frame.
    pub fn world_velocity(&self) -> Vec3 {
        self.q * self.v
    }

    pub fn is_finite(&self) -> bool {
        self.r.iter().all(|x| x.is_finite())
            && self.q.coords.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
            && self.omega.iter().all(|x| x.is_finite())
            && self.gamma_l.is_finite()
            && self.gamma_r.is_finite()
    }
}

/// Collective thrust along body z plus body moment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlWrench {
    pub thrust: f64,
    pub moment: Vec3,
}

impl ControlWrench {
    pub fn new(thrust: f64, moment: Vec3) -> Self {
        Self { thrust, moment }
    }

    pub fn force(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.thrust)
    }

    fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.thrust, self.moment.x, self.moment.y, self.moment.z)
    }

    fn from_vector(w: &Vector4<f64>) -> Self {
        Self::new(w[0], Vec3::new(w[1], w[2], w[3]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RotorSpeeds(pub [f64; 8]);

/// External wrench acting on the vehicle (body frame) plus per-wheel moments.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExternalWrench {
    pub force: Vec3,
    pub moment: Vec3,
    pub wheel_l: f64,
    pub wheel_r: f64,
}

impl ExternalWrench {
    pub fn force(force: Vec3) -> Self {
        Self {
            force,
            ..Default::default()
        }
    }
}

/// Which equations of motion drive the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsModel {
    /// Single rigid body; wheels, if present, are torque-free.
    Quadrotor,
    /// Multibody flight dynamics including wheel coupling.
    Rollocopter,
    /// Ground rolling under the no-slip constraint.
    Rolling,
}

/// Everything held constant over one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInputs {
    pub control: ControlWrench,
    pub external: ExternalWrench,
    /// Propulsive force along the rolling direction (rolling mode only), N.
    pub drive_force: f64,
}

/// Time derivative of a [`RigidState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub r_dot: Vec3,
    pub q_dot: Quaternion<f64>,
    pub v_dot: Vec3,
    pub omega_dot: Vec3,
    pub gamma_dot_l: f64,
    pub gamma_dot_r: f64,
}

/// The 4x8 map from squared rotor speeds to `[F_z, M_x, M_y, M_z]`.
pub fn mixing_matrix(p: &VehicleParams) -> SMatrix<f64, 4, 8> {
    const ROLL: [f64; 8] = [-1., 1., 1., -1., 1., -1., -1., 1.];
    const PITCH: [f64; 8] = [-1., -1., 1., 1., -1., -1., 1., 1.];
    const YAW: [f64; 8] = [-1., 1., -1., 1., 1., -1., 1., -1.];
    let (ct, cq, l) = (p.c_thrust(), p.c_torque(), p.arm_length);
    SMatrix::<f64, 4, 8>::from_fn(|row, col| match row {
        0 => ct,
        1 => l * ct * ROLL[col],
        2 => l * ct * PITCH[col],
        _ => cq * YAW[col],
    })
}

pub fn mix_rotor_speeds(n: &RotorSpeeds, p: &VehicleParams) -> ControlWrench {
    let squared = SVector::<f64, 8>::from_iterator(n.0.iter().map(|x| x * x));
    ControlWrench::from_vector(&(mixing_matrix(p) * squared))
}

fn min_norm_squared_speeds(w: &ControlWrench, p: &VehicleParams) -> SVector<f64, 8> {
    let b = mixing_matrix(p);
    let gram = b * b.transpose();
    // Rows of the mixing matrix are mutually orthogonal, so the Gram matrix is
    // diagonal and always invertible for positive coefficients.
    let gram_inv = gram.try_inverse().expect("mixing Gram matrix is diagonal positive");
    b.transpose() * (gram_inv * w.as_vector())
}

/// Minimum-norm squared-speed allocation of a desired wrench.
pub fn allocate_wrench(w: &ControlWrench, p: &VehicleParams) -> Result<RotorSpeeds> {
    let sq = min_norm_squared_speeds(w, p);
    let mut out = [0.0; 8];
    for (j, s) in sq.iter().enumerate() {
        if *s < -ALLOCATION_TOLERANCE {
            return Err(CioError::InfeasibleAllocation { rotor: j, value: *s });
        }
        out[j] = s.max(0.0).sqrt().min(MAX_ROTOR_SPEED);
    }
    Ok(RotorSpeeds(out))
}

/// Allocation used inside the closed loop: negative squared speeds are clipped
/// to zero instead of failing.
pub fn allocate_saturated(w: &ControlWrench, p: &VehicleParams) -> RotorSpeeds {
    let sq = min_norm_squared_speeds(w, p);
    let mut out = [0.0; 8];
    for (j, s) in sq.iter().enumerate() {
        out[j] = s.max(0.0).sqrt().min(MAX_ROTOR_SPEED);
    }
    RotorSpeeds(out)
}

fn gravity_body(q: &UnitQuaternion<f64>, g: f64) -> Vec3 {
    q.inverse_transform_vector(&Vec3::new(0.0, 0.0, -g))
}

fn quaternion_rate(q: &UnitQuaternion<f64>, omega: &Vec3) -> Quaternion<f64> {
    q.quaternion() * Quaternion::from_imag(*omega) * 0.5
}

fn translational(s: &RigidState, u: &ControlWrench, ext: &Vec3, p: &VehicleParams) -> Vec3 {
    (u.force() + ext) / p.m_t + gravity_body(&s.q, p.g) - s.omega.cross(&s.v)
}

/// Single-rigid-body dynamics with mass `m_t` and inertia `I_t`.
pub fn quadrotor_derivative(
    s: &RigidState,
    u: &ControlWrench,
    f_e: &Vec3,
    m_e: &Vec3,
    p: &VehicleParams,
) -> StateDerivative {
    let inertia = p.total_inertia();
    let torque = u.moment + m_e - s.omega.cross(&(inertia * s.omega));
    let omega_dot = Vec3::new(
        torque.x / p.i_t[0],
        torque.y / p.i_t[1],
        torque.z / p.i_t[2],
    );
    StateDerivative {
        r_dot: s.q * s.v,
        q_dot: quaternion_rate(&s.q, &s.omega),
        v_dot: translational(s, u, f_e, p),
        omega_dot,
        // torque-free wheels keep their absolute spin about the axle
        gamma_dot_l: -omega_dot.y,
        gamma_dot_r: -omega_dot.y,
    }
}

/// Assembled mass matrix of the coupled `(omega_dot, gamma_dot_l, gamma_dot_r)` system.
pub fn rollocopter_mass_matrix(p: &VehicleParams) -> Matrix5<f64> {
    let coupling = 2.0 * p.m_w * p.half_shaft.powi(2);
    let iw = p.i_w;
    #[rustfmt::skip]
    let m = Matrix5::new(
        p.i_t[0] + coupling, 0.0,      0.0,                 0.0, 0.0,
        0.0,                 p.i_t[1], 0.0,                 iw,  iw,
        0.0,                 0.0,      p.i_t[2] + coupling, 0.0, 0.0,
        0.0,                 iw,       0.0,                 iw,  0.0,
        0.0,                 iw,       0.0,                 0.0, iw,
    );
    m
}

/// Multibody flight dynamics of the hybrid vehicle.
///
/// The wheel terms couple the body angular acceleration and the wheel
/// accelerations implicitly; both are obtained from one 5x5 solve. With
/// massless wheels (`m_w = I_w = 0`) the wheel rows carry no information and
/// the result coincides with [`quadrotor_derivative`].
pub fn rollocopter_derivative(
    s: &RigidState,
    u: &ControlWrench,
    ext: &ExternalWrench,
    p: &VehicleParams,
) -> Result<StateDerivative> {
    let w = s.omega;
    let gyro = w.cross(&(p.body_inertia() * w));
    let coupling = 2.0 * p.m_w * p.half_shaft.powi(2);
    let torque = u.moment + ext.moment - gyro;
    let rhs_x = torque.x - coupling * w.z * w.y;
    let rhs_z = torque.z + coupling * w.x * w.y;

    let (omega_dot, gamma_dot_l, gamma_dot_r) = if p.i_w == 0.0 {
        if ext.wheel_l != 0.0 || ext.wheel_r != 0.0 {
            return Err(CioError::SingularInertia {
                condition: f64::INFINITY,
            });
        }
        let od = Vec3::new(
            rhs_x / (p.i_t[0] + coupling),
            torque.y / p.i_t[1],
            rhs_z / (p.i_t[2] + coupling),
        );
        (od, -od.y, -od.y)
    } else {
        let m = rollocopter_mass_matrix(p);
        let eig = m.symmetric_eigenvalues();
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), e| (lo.min(e.abs()), hi.max(e.abs())));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if condition > MAX_INERTIA_CONDITION {
            return Err(CioError::SingularInertia { condition });
        }
        let rhs = Vector5::new(rhs_x, torque.y, rhs_z, ext.wheel_l, ext.wheel_r);
        let x = m
            .lu()
            .solve(&rhs)
            .ok_or(CioError::SingularInertia { condition })?;
        (Vec3::new(x[0], x[1], x[2]), x[3], x[4])
    };

    Ok(StateDerivative {
        r_dot: s.q * s.v,
        q_dot: quaternion_rate(&s.q, &s.omega),
        v_dot: translational(s, u, &ext.force, p),
        omega_dot,
        gamma_dot_l,
        gamma_dot_r,
    })
}

/// No-slip rolling kinematics: `(v_x, v_y, omega_z)` from the wheel rates and
/// the body pitch rate.
pub fn rolling_constrained_velocity(
    gamma_l: f64,
    gamma_r: f64,
    omega_y: f64,
    p: &VehicleParams,
) -> (f64, f64, f64) {
    let r = p.wheel_radius;
    (
        0.5 * r * (gamma_r + gamma_l + 2.0 * omega_y),
        0.0,
        r / (2.0 * p.half_shaft) * (gamma_r - gamma_l),
    )
}

/// Effective mass on the rolling coordinate `gamma_r + gamma_l + 2 omega_y`.
pub fn rolling_drive_coefficient(p: &VehicleParams) -> f64 {
    p.m_t * p.wheel_radius / 2.0 + 2.0 * p.i_w / p.wheel_radius
}

/// Effective inertia on the steering coordinate `gamma_r - gamma_l`.
pub fn rolling_steer_coefficient(p: &VehicleParams) -> f64 {
    let (r, l) = (p.wheel_radius, p.half_shaft);
    r / (2.0 * l) * p.i_t[2] + p.m_w * l * r + p.i_w * l / r
}

/// Reduced dynamics while rolling on flat ground.
///
/// In rolling mode `q` is the level heading frame of the axle; body pitch about
/// the axle is carried only as the rate `omega.y`. `v` and `omega` are the
/// constrained values implied by the wheel rates.
pub fn rolling_derivative(
    s: &RigidState,
    u: &ControlWrench,
    drive_force: f64,
    ext: &ExternalWrench,
    p: &VehicleParams,
) -> Result<StateDerivative> {
    let pitch_inertia = p.i_t[1] - 2.0 * p.i_w;
    if pitch_inertia <= p.i_t[1] / MAX_INERTIA_CONDITION {
        return Err(CioError::SingularInertia {
            condition: p.i_t[1] / pitch_inertia.abs(),
        });
    }
    let sum_dot = (drive_force + ext.force.x) / rolling_drive_coefficient(p);
    let diff_dot = (u.moment.z + ext.moment.z) / rolling_steer_coefficient(p);
    let gyro_y = s.omega.cross(&(p.body_inertia() * s.omega)).y;
    let pitch_dot = (u.moment.y + ext.moment.y - gyro_y - p.i_w * sum_dot) / pitch_inertia;

    let (vx, _, wz) = rolling_constrained_velocity(s.gamma_l, s.gamma_r, s.omega.y, p);
    let r = p.wheel_radius;
    let heading_rate = Vec3::new(0.0, 0.0, wz);
    Ok(StateDerivative {
        r_dot: s.q * Vec3::new(vx, 0.0, 0.0),
        q_dot: quaternion_rate(&s.q, &heading_rate),
        v_dot: Vec3::new(0.5 * r * sum_dot, 0.0, 0.0),
        omega_dot: Vec3::new(0.0, pitch_dot, r / (2.0 * p.half_shaft) * diff_dot),
        gamma_dot_l: 0.5 * (sum_dot - diff_dot) - pitch_dot,
        gamma_dot_r: 0.5 * (sum_dot + diff_dot) - pitch_dot,
    })
}

pub fn derivative(
    model: DynamicsModel,
    s: &RigidState,
    inputs: &StepInputs,
    p: &VehicleParams,
) -> Result<StateDerivative> {
    match model {
        DynamicsModel::Quadrotor => Ok(quadrotor_derivative(
            s,
            &inputs.control,
            &inputs.external.force,
            &inputs.external.moment,
            p,
        )),
        DynamicsModel::Rollocopter => rollocopter_derivative(s, &inputs.control, &inputs.external, p),
        DynamicsModel::Rolling => {
            rolling_derivative(s, &inputs.control, inputs.drive_force, &inputs.external, p)
        }
    }
}

fn advance(s: &RigidState, d: &StateDerivative, h: f64) -> RigidState {
    RigidState {
        r: s.r + d.r_dot * h,
        // intermediate stages are renormalized; the final state is renormalized again
        q: UnitQuaternion::from_quaternion(s.q.quaternion() + d.q_dot * h),
        v: s.v + d.v_dot * h,
        omega: s.omega + d.omega_dot * h,
        gamma_l: s.gamma_l + d.gamma_dot_l * h,
        gamma_r: s.gamma_r + d.gamma_dot_r * h,
    }
}

/// Project a rolling state back onto the no-slip manifold.
pub fn project_rolling(s: &mut RigidState, p: &VehicleParams) {
    let (vx, vy, wz) = rolling_constrained_velocity(s.gamma_l, s.gamma_r, s.omega.y, p);
    s.v = Vec3::new(vx, vy, 0.0);
    s.omega = Vec3::new(0.0, s.omega.y, wz);
}

/// One classical RK4 step without the rolling projection.
pub fn integrate(
    s: &RigidState,
    inputs: &StepInputs,
    dt: f64,
    p: &VehicleParams,
    model: DynamicsModel,
) -> Result<RigidState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CioError::InvalidParameter {
            name: "dt",
            reason: format!("time step must be positive, got {dt}"),
        });
    }
    let k1 = derivative(model, s, inputs, p)?;
    let k2 = derivative(model, &advance(s, &k1, dt / 2.0), inputs, p)?;
    let k3 = derivative(model, &advance(s, &k2, dt / 2.0), inputs, p)?;
    let k4 = derivative(model, &advance(s, &k3, dt), inputs, p)?;
    let w = dt / 6.0;
    let q = s.q.quaternion() + (k1.q_dot + k2.q_dot * 2.0 + k3.q_dot * 2.0 + k4.q_dot) * w;
    let next = RigidState {
        r: s.r + (k1.r_dot + k2.r_dot * 2.0 + k3.r_dot * 2.0 + k4.r_dot) * w,
        q: UnitQuaternion::from_quaternion(q),
        v: s.v + (k1.v_dot + k2.v_dot * 2.0 + k3.v_dot * 2.0 + k4.v_dot) * w,
        omega: s.omega + (k1.omega_dot + k2.omega_dot * 2.0 + k3.omega_dot * 2.0 + k4.omega_dot) * w,
        gamma_l: s.gamma_l
            + (k1.gamma_dot_l + 2.0 * k2.gamma_dot_l + 2.0 * k3.gamma_dot_l + k4.gamma_dot_l) * w,
        gamma_r: s.gamma_r
            + (k1.gamma_dot_r + 2.0 * k2.gamma_dot_r + 2.0 * k3.gamma_dot_r + k4.gamma_dot_r) * w,
    };
    if !next.is_finite() {
        return Err(CioError::NonFiniteState { what: "rigid state" });
    }
    Ok(next)
}

/// One classical RK4 step of the selected dynamics.
pub fn step(
    s: &RigidState,
    inputs: &StepInputs,
    dt: f64,
    p: &VehicleParams,
    model: DynamicsModel,
) -> Result<RigidState> {
    let mut next = integrate(s, inputs, dt, p, model)?;
    if model == DynamicsModel::Rolling {
        project_rolling(&mut next, p);
    }
    Ok(next)
}

/// Largest violation of the no-slip rolling constraint.
pub fn rolling_constraint_residual(s: &RigidState, p: &VehicleParams) -> f64 {
    let (vx, vy, wz) = rolling_constrained_velocity(s.gamma_l, s.gamma_r, s.omega.y, p);
    [s.v.x - vx, s.v.y - vy, s.v.z, s.omega.x, s.omega.z - wz]
        .iter()
        .fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Kinetic plus potential energy of the single-rigid-body model.
pub fn mechanical_energy(s: &RigidState, p: &VehicleParams) -> f64 {
    let inertia: Matrix3<f64> = p.total_inertia();
    0.5 * p.m_t * s.v.norm_squared() + 0.5 * s.omega.dot(&(inertia * s.omega)) + p.m_t * p.g * s.r.z
}
