//! Closed-loop scenario execution.
//!
//! Dynamics run at 1 kHz. Sensors, the wrench observer, both filters and the
//! attitude loop run at 200 Hz; the velocity loop runs at 50 Hz.

use std::f64::consts::TAU;

use nalgebra::UnitQuaternion;

use crate::cio_filter::{contact_update, predict, FilterState, Matrix12, UpdateScheduler};
use crate::error::Result;
use crate::reactive_planner::{Planner, ReferenceCause, ReferenceVelocity};
use crate::vehicle_model::{
    allocate_saturated, integrate, mix_rotor_speeds, project_rolling, rolling_constraint_residual, step,
    ControlWrench, DynamicsModel, ExternalWrench, RigidState, StepInputs, Vec3,
};
use crate::velocity_controller::{control_wrench, height_hold_acceleration, velocity_to_acceleration};
use crate::wrench_estimator::{
    update_flying, update_rolling, CollisionDetector, ContactMode, EncoderDifferentiator, WrenchEstimate,
};

use super::config::{Feedback, FilterConfig, Frame, Mode, ScenarioConfig};
use super::log::{FilterRecord, PhysicsContact, RunLog, TickRecord, UpdateRecord};
use super::sensors::{encoder_model, imu_model};

pub const DYNAMICS_DT: f64 = 1e-3;
pub const SENSOR_DIVIDER: u64 = 5;
pub const VELOCITY_DIVIDER: u64 = 20;
pub const SENSOR_DT: f64 = DYNAMICS_DT * SENSOR_DIVIDER as f64;

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunLog> {
    cfg.vehicle.validate()?;
    match cfg.mode {
        Mode::Rolling => run_rolling(cfg),
        Mode::Flying | Mode::Bouncing => run_flying(cfg),
    }
}

fn initial_covariance(f: &FilterConfig, gyro_sigma: f64) -> Matrix12 {
    let mut d = [0.0; 12];
    for (i, sigma) in [
        f.initial_position_sigma,
        f.initial_attitude_sigma,
        f.initial_velocity_sigma,
        gyro_sigma,
    ]
    .into_iter()
    .enumerate()
    {
        d[3 * i..3 * i + 3].fill(sigma * sigma);
    }
    Matrix12::from_diagonal(&d.into())
}

fn disturbance(cfg: &ScenarioConfig, t: f64, q: &UnitQuaternion<f64>) -> Vec3 {
    match cfg.disturbance {
        Some(d) if t >= d.start => match d.frame {
            Frame::World => q.inverse() * Vec3::from(d.force),
            Frame::Body => Vec3::from(d.force),
        },
        _ => Vec3::zeros(),
    }
}

fn start_attitude(cfg: &ScenarioConfig) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(0.0, 0.0, cfg.start.yaw)
}

fn run_flying(cfg: &ScenarioConfig) -> Result<RunLog> {
    let p = cfg.vehicle;
    let g = p.g;
    let env = cfg.environment.build();
    env.validate()?;
    let model = cfg.dynamics;
    let q0 = start_attitude(cfg);
    let mut s = RigidState {
        r: cfg.start.position.into(),
        q: q0,
        v: q0.inverse() * Vec3::from(cfg.start.velocity),
        ..Default::default()
    };
    let mut rng = cfg.noise.rng();
    let mut planner = Planner::new(cfg.planner)?;
    let mut announced: Option<ReferenceVelocity> = Some(match (cfg.mode, cfg.reference) {
        (Mode::Bouncing, _) => planner.vertical(0.0),
        (_, Some(v)) => planner.set_reference(0.0, v.into()),
        _ => planner.current(),
    });

    let mut cio = FilterState::new(0.0, s.r, s.q, s.v, initial_covariance(&cfg.filter, cfg.noise.gyro_sigma));
    let mut shadow = cfg.comparison.then_some(cio);
    let process = cfg.filter.process.covariance(SENSOR_DT);
    let weights = cfg.detection.weights(&p);
    let mut detector = CollisionDetector::new(cfg.detection.threshold_force.powi(2), cfg.detection.refractory)
        .with_repeat((cfg.detection.repeat > 0.0).then_some(cfg.detection.repeat));
    let mut scheduler = UpdateScheduler::new(cfg.filter.trigger);
    let mut event_t = 0.0;
    let mut est = WrenchEstimate::default();
    let mut differentiator = EncoderDifferentiator::default();
    let encoders = model == DynamicsModel::Rollocopter;

    let mut a_des = Vec3::new(0.0, 0.0, g);
    let mut u = ControlWrench::new(p.m_t * g, Vec3::zeros());
    let (mut accel_sum, mut gyro_sum, mut n_sub) = (Vec3::zeros(), Vec3::zeros(), 0u32);
    let mut contacts = Vec::new();
    let mut contact = env.contact_wrench(&s, &p).map_err(|e| e.at(0.0))?;

    let n_steps = (cfg.duration / DYNAMICS_DT).round() as u64;
    let mut ticks = Vec::with_capacity((n_steps / SENSOR_DIVIDER + 1) as usize);
    for k in 0..=n_steps {
        let t = k as f64 * DYNAMICS_DT;
        if k % SENSOR_DIVIDER == 0 {
            let mut imu = None;
            let mut encoder = None;
            let mut event = None;
            let mut update = None;
            let mut reference = announced.take();
            if n_sub > 0 {
                let n = n_sub as f64;
                let sample = imu_model(t, &(accel_sum / n), &(gyro_sum / n), &cfg.noise, &mut rng);
                encoder = encoders.then(|| {
                    let (gl, gr) = encoder_model(s.gamma_l, s.gamma_r, &cfg.noise, &mut rng);
                    differentiator.sample(t, gl, gr)
                });
                est = update_flying(&est, &sample, encoder.as_ref(), &u, SENSOR_DT, &p);
                cio = predict(&cio, &sample, &process, SENSOR_DT, g).map_err(|e| e.at(t))?;
                if let Some(sh) = shadow.as_mut() {
                    *sh = predict(sh, &sample, &process, SENSOR_DT, g).map_err(|e| e.at(t))?;
                }
                imu = Some(sample);

                let due = match detector.detect(&est, &weights, t, ContactMode::Flying) {
                    Some(ev) => {
                        if cfg.mode == Mode::Flying {
                            let r = planner.on_collision(t, &(cio.q * ev.force)).map_err(|e| e.at(t))?;
                            if r.cause == ReferenceCause::Collision && r.t_issued == t {
                                reference = Some(r);
                            }
                        }
                        event_t = t;
                        event = Some(ev);
                        scheduler.on_detection(t, ev.force)
                    }
                    None => scheduler.on_estimate(t, est.force),
                };
                if let (Some(force), true) = (due, cfg.cio) {
                    let before = cio;
                    let r = cfg.filter.measurement.covariance(&force);
                    cio = contact_update(&cio, &force, &r).map_err(|e| e.at(t))?;
                    update = Some(UpdateRecord {
                        event_t,
                        force: force.into(),
                        trace_before: before.velocity_trace(),
                        trace_after: cio.velocity_trace(),
                        v_before: before.world_velocity().into(),
                        v_after: cio.world_velocity().into(),
                        v_true: s.world_velocity().into(),
                    });
                }
            }

            let v_ref = if cfg.mode == Mode::Bouncing {
                let r = planner.vertical(t);
                if r.t_issued == t && t > 0.0 {
                    reference = Some(r);
                }
                r.v_ref
            } else {
                planner.current().v_ref
            };
            if k % VELOCITY_DIVIDER == 0 {
                let v_fb = match cfg.feedback {
                    Feedback::Truth => s.world_velocity(),
                    Feedback::Estimate => cio.world_velocity(),
                };
                a_des = velocity_to_acceleration(&v_ref, &v_fb, &cfg.controller, g);
                if let Some(h) = cfg.hold_height {
                    a_des.z = height_hold_acceleration(h, s.r.z, s.world_velocity().z, &cfg.controller, g);
                }
            }
            let command = control_wrench(&a_des, &s.q, &s.omega, &cfg.controller, &p).map_err(|e| e.at(t))?;
            u = mix_rotor_speeds(&allocate_saturated(&command, &p), &p);

            ticks.push(TickRecord {
                t,
                truth: (&s).into(),
                imu,
                encoder,
                wrench: (&est).into(),
                metric: crate::wrench_estimator::collision_metric(&est, &weights),
                cio: Some(FilterRecord::from(&cio)),
                shadow: shadow.as_ref().map(FilterRecord::from),
                v_ref: v_ref.into(),
                control: u,
                drive_force: 0.0,
                event,
                update,
                reference,
                contacts: std::mem::take(&mut contacts),
                constraint_residual: None,
            });
            accel_sum = Vec3::zeros();
            gyro_sum = Vec3::zeros();
            n_sub = 0;
        }
        if k == n_steps {
            break;
        }

        let external = ExternalWrench {
            force: disturbance(cfg, t, &s.q) + s.q.inverse() * contact.force,
            moment: contact.moment,
            ..Default::default()
        };
        let inputs = StepInputs {
            control: u,
            external,
            drive_force: 0.0,
        };
        let omega_start = s.omega;
        accel_sum += (u.force() + external.force) / p.m_t;
        s = step(&s, &inputs, DYNAMICS_DT, &p, model).map_err(|e| e.at(t))?;
        gyro_sum += (omega_start + s.omega) * 0.5;
        n_sub += 1;
        let t_next = (k + 1) as f64 * DYNAMICS_DT;
        contact = env.contact_wrench(&s, &p).map_err(|e| e.at(t_next))?;
        contacts.extend(contact.contacts.iter().map(|&record| PhysicsContact { t: t_next, record }));
    }
    Ok(RunLog {
        name: cfg.name.clone(),
        mode: cfg.mode,
        seed: cfg.seed,
        ticks,
    })
}

fn run_rolling(cfg: &ScenarioConfig) -> Result<RunLog> {
    let p = cfg.vehicle;
    let g = p.g;
    let rc = cfg.rolling;
    let model = DynamicsModel::Rolling;
    let gamma0 = Vec3::from(cfg.start.velocity).norm() / p.wheel_radius;
    let mut s = RigidState {
        r: Vec3::new(cfg.start.position[0], cfg.start.position[1], p.wheel_radius),
        q: start_attitude(cfg),
        gamma_l: gamma0,
        gamma_r: gamma0,
        ..Default::default()
    };
    project_rolling(&mut s, &p);
    let mut rng = cfg.noise.rng();
    let weights = cfg.detection.weights(&p);
    let mut detector = CollisionDetector::new(cfg.detection.threshold_force.powi(2), cfg.detection.refractory)
        .with_repeat((cfg.detection.repeat > 0.0).then_some(cfg.detection.repeat));
    let mut est = WrenchEstimate::default();
    let mut differentiator = EncoderDifferentiator::default();

    let mut u = ControlWrench::default();
    let mut drive = 0.0;
    let mut v_start = s.v;
    let (mut gyro_sum, mut n_sub) = (Vec3::zeros(), 0u32);
    let mut residual: f64 = rolling_constraint_residual(&s, &p);

    let n_steps = (cfg.duration / DYNAMICS_DT).round() as u64;
    let mut ticks = Vec::with_capacity((n_steps / SENSOR_DIVIDER + 1) as usize);
    for k in 0..=n_steps {
        let t = k as f64 * DYNAMICS_DT;
        if k % SENSOR_DIVIDER == 0 {
            let mut imu = None;
            let mut encoder = None;
            let mut event = None;
            if n_sub > 0 {
                let n = n_sub as f64;
                let omega = gyro_sum / n;
                // heading frame is level, so gravity reaction is along body z
                let accel = (s.v - v_start) / SENSOR_DT + omega.cross(&s.v) + Vec3::new(0.0, 0.0, g);
                let sample = imu_model(t, &accel, &omega, &cfg.noise, &mut rng);
                let (gl, gr) = encoder_model(s.gamma_l, s.gamma_r, &cfg.noise, &mut rng);
                let enc = differentiator.sample(t, gl, gr);
                est = update_rolling(&est, &enc, &sample.gyro, &u, drive, SENSOR_DT, &p);
                event = detector.detect(&est, &weights, t, ContactMode::Rolling);
                imu = Some(sample);
                encoder = Some(enc);
            }

            let direction = if (t / rc.loop_period).floor() as i64 % 2 == 0 { 1.0 } else { -1.0 };
            let yaw_rate_ref = direction * TAU / rc.loop_period;
            drive = rc.kp_speed * (rc.speed - s.v.x);
            u = ControlWrench::new(0.0, Vec3::new(0.0, 0.0, rc.kp_yaw * (yaw_rate_ref - s.omega.z)));

            ticks.push(TickRecord {
                t,
                truth: (&s).into(),
                imu,
                encoder,
                wrench: (&est).into(),
                metric: crate::wrench_estimator::collision_metric(&est, &weights),
                cio: None,
                shadow: None,
                v_ref: (s.q * Vec3::new(rc.speed, 0.0, 0.0)).into(),
                control: u,
                drive_force: drive,
                event,
                update: None,
                reference: None,
                contacts: Vec::new(),
                constraint_residual: Some(residual),
            });
            v_start = s.v;
            gyro_sum = Vec3::zeros();
            n_sub = 0;
            residual = 0.0;
        }
        if k == n_steps {
            break;
        }

        let external = ExternalWrench {
            force: disturbance(cfg, t, &s.q) - Vec3::new(rc.resistance, 0.0, 0.0),
            ..Default::default()
        };
        let inputs = StepInputs {
            control: u,
            external,
            drive_force: drive,
        };
        let omega_start = s.omega;
        let mut next = integrate(&s, &inputs, DYNAMICS_DT, &p, model).map_err(|e| e.at(t))?;
        residual = residual.max(rolling_constraint_residual(&next, &p));
        project_rolling(&mut next, &p);
        s = next;
        gyro_sum += (omega_start + s.omega) * 0.5;
        n_sub += 1;
    }
    Ok(RunLog {
        name: cfg.name.clone(),
        mode: cfg.mode,
        seed: cfg.seed,
        ticks,
    })
}
