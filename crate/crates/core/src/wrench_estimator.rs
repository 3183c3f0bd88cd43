//! External wrench observers for flying and rolling, and the collision metric.
//!
//! Every observer channel is a first-order low-pass filter on a dynamics
//! residual, `w_dot = K (rho - w)`. Channels whose residual contains a time
//! derivative of a measured quantity are written in momentum form so that the
//! derivative is replaced by a difference of momenta and never computed
//! numerically. Discretization is exact for inputs that are constant over a
//! sample interval: `w+ = e^{-K dt} w + (1 - e^{-K dt}) rho_bar`, with
//! `rho_bar` the trapezoidal average of the residual over the interval.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::params::VehicleParams;
use crate::vehicle_model::{rolling_drive_coefficient, rolling_steer_coefficient, ControlWrench, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    /// Specific force (thrust and contact forces, not gravity), body frame, m/s^2.
    pub accel: Vec3,
    /// Angular rate, body frame, rad/s.
    pub gyro: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderSample {
    pub t: f64,
    pub gamma_l: f64,
    pub gamma_r: f64,
    pub gamma_dot_l: f64,
    pub gamma_dot_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactMode {
    Flying,
    Rolling,
}

/// Values carried between observer updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ObserverMemory {
    Flying {
        /// `m a - F_in` at the previous sample.
        force_residual: Vec3,
        /// Generalized angular momentum at the previous sample.
        momentum: Vec3,
        /// Non-derivative moment terms at the previous sample.
        moment_terms: Vec3,
        /// `I_w (omega_y + gamma_i)` at the previous sample.
        wheel_momentum: [f64; 2],
    },
    Rolling {
        residual: Vec3,
        omega_y: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WrenchEstimate {
    pub force: Vec3,
    pub moment: Vec3,
    pub wheel_l: f64,
    pub wheel_r: f64,
    pub memory: Option<ObserverMemory>,
}

impl WrenchEstimate {
    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.moment.iter()).all(|x| x.is_finite())
            && self.wheel_l.is_finite()
            && self.wheel_r.is_finite()
    }

    /// The same estimate with all components multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            force: self.force * s,
            moment: self.moment * s,
            wheel_l: self.wheel_l * s,
            wheel_r: self.wheel_r * s,
            memory: self.memory,
        }
    }
}

/// Exact first-order update for a residual held at `rho` over `dt`.
pub fn low_pass(w: f64, rho: f64, gain: f64, dt: f64) -> f64 {
    let decay = (-gain * dt).exp();
    decay * w + (1.0 - decay) * rho
}

fn low_pass3(w: &Vec3, rho: &Vec3, gain: f64, dt: f64) -> Vec3 {
    w.zip_map(rho, |a, b| low_pass(a, b, gain, dt))
}

fn wheel_terms(enc: Option<&EncoderSample>) -> (f64, f64) {
    enc.map_or((0.0, 0.0), |e| (e.gamma_l, e.gamma_r))
}

/// Angular momentum whose rate appears in the moment observer:
/// `I_t omega + (2 m_w L^2 omega_x, I_w (gamma_l + gamma_r), 2 m_w L^2 omega_z)`.
fn generalized_momentum(omega: &Vec3, gammas: (f64, f64), p: &VehicleParams) -> Vec3 {
    let c = 2.0 * p.m_w * p.half_shaft.powi(2);
    p.total_inertia() * omega + Vec3::new(c * omega.x, p.i_w * (gammas.0 + gammas.1), c * omega.z)
}

/// `omega x I_b omega + (2 m_w L^2 omega_z omega_y, 0, -2 m_w L^2 omega_x omega_y) - M_in`.
fn moment_terms(omega: &Vec3, u: &ControlWrench, p: &VehicleParams) -> Vec3 {
    let c = 2.0 * p.m_w * p.half_shaft.powi(2);
    omega.cross(&(p.body_inertia() * omega))
        + Vec3::new(c * omega.z * omega.y, 0.0, -c * omega.x * omega.y)
        - u.moment
}

fn wheel_momentum(omega_y: f64, gammas: (f64, f64), p: &VehicleParams) -> [f64; 2] {
    [p.i_w * (omega_y + gammas.0), p.i_w * (omega_y + gammas.1)]
}

/// Flying-mode observer step.
///
/// Without encoder data the wheel terms are dropped, i.e. the update runs
/// with the wheelless parameter set.
pub fn update_flying(
    est: &WrenchEstimate,
    imu: &ImuSample,
    enc: Option<&EncoderSample>,
    u: &ControlWrench,
    dt: f64,
    p: &VehicleParams,
) -> WrenchEstimate {
    let params = if enc.is_some() { *p } else { p.without_wheels() };
    let p = &params;
    let gammas = wheel_terms(enc);
    let force_residual = imu.accel * p.m_t - u.force();
    let momentum = generalized_momentum(&imu.gyro, gammas, p);
    let terms = moment_terms(&imu.gyro, u, p);
    let wheels = wheel_momentum(imu.gyro.y, gammas, p);
    let memory = ObserverMemory::Flying {
        force_residual,
        momentum,
        moment_terms: terms,
        wheel_momentum: wheels,
    };

    match est.memory {
        Some(ObserverMemory::Flying {
            force_residual: prev_force,
            momentum: prev_momentum,
            moment_terms: prev_terms,
            wheel_momentum: prev_wheels,
        }) => {
            let force_rho = (prev_force + force_residual) * 0.5;
            let moment_rho = (momentum - prev_momentum) / dt + (prev_terms + terms) * 0.5;
            WrenchEstimate {
                force: low_pass3(&est.force, &force_rho, p.k_f, dt),
                moment: low_pass3(&est.moment, &moment_rho, p.k_m, dt),
                wheel_l: low_pass(est.wheel_l, (wheels[0] - prev_wheels[0]) / dt, p.k_w, dt),
                wheel_r: low_pass(est.wheel_r, (wheels[1] - prev_wheels[1]) / dt, p.k_w, dt),
                memory: Some(memory),
            }
        }
        Some(ObserverMemory::Rolling { .. }) => WrenchEstimate {
            memory: Some(memory),
            ..*est
        },
        None => {
            // At the first sample every integral is empty: F_e = 0,
            // M_e = K_M I_t omega, M_w = K_w I_w (omega_y + gamma).
            WrenchEstimate {
                force: Vec3::zeros(),
                moment: p.total_inertia() * imu.gyro * p.k_m,
                wheel_l: p.k_w * wheels[0],
                wheel_r: p.k_w * wheels[1],
                memory: Some(memory),
            }
        }
    }
}

/// Rolling-mode observer step for `F_e^x`, `F_e^y` and `M_e^z`; the remaining
/// components are held at zero.
pub fn update_rolling(
    est: &WrenchEstimate,
    enc: &EncoderSample,
    omega: &Vec3,
    u: &ControlWrench,
    drive_force: f64,
    dt: f64,
    p: &VehicleParams,
) -> WrenchEstimate {
    let prev_omega_y = match est.memory {
        Some(ObserverMemory::Rolling { omega_y, .. }) => omega_y,
        _ => omega.y,
    };
    let pitch_accel = (omega.y - prev_omega_y) / dt;
    let (r, l) = (p.wheel_radius, p.half_shaft);
    let sum = enc.gamma_r + enc.gamma_l + 2.0 * omega.y;
    let residual = Vector3::new(
        rolling_drive_coefficient(p) * (enc.gamma_dot_r + enc.gamma_dot_l + 2.0 * pitch_accel)
            - drive_force,
        p.m_t * r * r / (4.0 * l) * (enc.gamma_r - enc.gamma_l) * sum,
        rolling_steer_coefficient(p) * (enc.gamma_dot_r - enc.gamma_dot_l) - u.moment.z,
    );
    let memory = Some(ObserverMemory::Rolling {
        residual,
        omega_y: omega.y,
    });
    let Some(ObserverMemory::Rolling { residual: prev, .. }) = est.memory else {
        return WrenchEstimate {
            force: Vec3::new(est.force.x, est.force.y, 0.0),
            moment: Vec3::new(0.0, 0.0, est.moment.z),
            wheel_l: 0.0,
            wheel_r: 0.0,
            memory,
        };
    };
    let rho = (prev + residual) * 0.5;
    WrenchEstimate {
        force: Vec3::new(
            low_pass(est.force.x, rho.x, p.k_f, dt),
            low_pass(est.force.y, rho.y, p.k_f, dt),
            0.0,
        ),
        moment: Vec3::new(0.0, 0.0, low_pass(est.moment.z, rho.z, p.k_m, dt)),
        wheel_l: 0.0,
        wheel_r: 0.0,
        memory,
    }
}

/// Estimates wheel accelerations from encoder rates: first difference followed
/// by a two-sample moving average.
#[derive(Debug, Clone, Copy, Default)]
pub struct EncoderDifferentiator {
    prev: Option<(f64, f64, f64)>,
    prev_diff: Option<(f64, f64)>,
}

impl EncoderDifferentiator {
    pub fn sample(&mut self, t: f64, gamma_l: f64, gamma_r: f64) -> EncoderSample {
        let diff = match self.prev {
            Some((t0, l0, r0)) if t > t0 => ((gamma_l - l0) / (t - t0), (gamma_r - r0) / (t - t0)),
            _ => (0.0, 0.0),
        };
        let smoothed = match self.prev_diff {
            Some(d) => (0.5 * (d.0 + diff.0), 0.5 * (d.1 + diff.1)),
            None => diff,
        };
        if self.prev.is_some() {
            self.prev_diff = Some(diff);
        }
        self.prev = Some((t, gamma_l, gamma_r));
        EncoderSample {
            t,
            gamma_l,
            gamma_r,
            gamma_dot_l: smoothed.0,
            gamma_dot_r: smoothed.1,
        }
    }
}

/// Weights of the collision metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricWeights {
    pub force: f64,
    pub moment: f64,
    pub wheel: f64,
}

impl MetricWeights {
    /// `(1, 1/L^2, 1/R^2)`: every term carries force-squared units.
    pub fn balanced(p: &VehicleParams) -> Self {
        Self {
            force: 1.0,
            moment: 1.0 / p.half_shaft.powi(2),
            wheel: 1.0 / p.wheel_radius.powi(2),
        }
    }

    /// Force term only; the flying-mode default, where contact forces dominate.
    pub fn force_only() -> Self {
        Self {
            force: 1.0,
            moment: 0.0,
            wheel: 0.0,
        }
    }
}

pub fn collision_metric(est: &WrenchEstimate, w: &MetricWeights) -> f64 {
    w.force * est.force.norm_squared()
        + w.moment * est.moment.norm_squared()
        + w.wheel * (est.wheel_l.powi(2) + est.wheel_r.powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub t: f64,
    /// Estimated external force at detection, body frame.
    pub force: Vec3,
    pub metric: f64,
    pub mode: ContactMode,
}

/// Upward threshold-crossing detector with a refractory window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionDetector {
    pub threshold: f64,
    pub refractory: f64,
    /// Re-report a contact that keeps the metric above threshold, once per period.
    pub repeat: Option<f64>,
    last_event: Option<f64>,
    above: bool,
}

impl CollisionDetector {
    pub fn new(threshold: f64, refractory: f64) -> Self {
        assert!(threshold > 0.0, "collision threshold must be positive");
        Self {
            threshold,
            refractory,
            repeat: None,
            last_event: None,
            above: false,
        }
    }

    pub fn with_repeat(self, repeat: Option<f64>) -> Self {
        Self { repeat, ..self }
    }

    /// Returns true when `metric` at `t` opens a new collision event.
    /// A crossing suppressed by the refractory window fires once the window
    /// ends if the metric is still above threshold.
    pub fn observe(&mut self, t: f64, metric: f64) -> bool {
        if metric < self.threshold {
            self.above = false;
            return false;
        }
        let since = self.last_event.map_or(f64::INFINITY, |t0| t - t0);
        if self.above {
            let due = self.repeat.is_some_and(|period| since >= period);
            if due {
                self.last_event = Some(t);
            }
            return due;
        }
        if since < self.refractory {
            return false;
        }
        self.above = true;
        self.last_event = Some(t);
        true
    }

    pub fn detect(
        &mut self,
        est: &WrenchEstimate,
        weights: &MetricWeights,
        t: f64,
        mode: ContactMode,
    ) -> Option<ContactEvent> {
        let metric = collision_metric(est, weights);
        self.observe(t, metric).then_some(ContactEvent {
            t,
            force: est.force,
            metric,
            mode,
        })
    }
}

/// Scan a `(t, W)` stream and return the event times.
pub fn detect_collisions(stream: &[(f64, f64)], threshold: f64, refractory: f64) -> Vec<f64> {
    let mut det = CollisionDetector::new(threshold, refractory);
    stream
        .iter()
        .filter(|(t, w)| det.observe(*t, *w))
        .map(|(t, _)| *t)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const DT: f64 = 0.005;

    fn imu(t: f64, accel: Vec3, gyro: Vec3) -> ImuSample {
        ImuSample { t, accel, gyro }
    }

    #[test]
    fn force_step_response_matches_closed_form() {
        for gain in [1.0, 10.0, 100.0] {
            let p = VehicleParams {
                k_f: gain,
                ..Default::default()
            };
            // residual m a - F_in = (1, 0, 0) with F_in = 0
            let accel = Vec3::new(1.0 / p.m_t, 0.0, 0.0);
            let u = ControlWrench::default();
            let mut est = update_flying(&WrenchEstimate::default(), &imu(0.0, accel, Vec3::zeros()), None, &u, DT, &p);
            for k in 1..=400 {
                let t = k as f64 * DT;
                est = update_flying(&est, &imu(t, accel, Vec3::zeros()), None, &u, DT, &p);
                let expected = 1.0 - (-gain * t).exp();
                assert!((est.force.x - expected).abs() < 1e-6, "K={gain} t={t}");
            }
        }
        let p = VehicleParams::default();
        let accel = Vec3::new(1.0 / p.m_t, 0.0, 0.0);
        let mut est = WrenchEstimate::default();
        for k in 0..=20 {
            est = update_flying(&est, &imu(k as f64 * DT, accel, Vec3::zeros()), None, &ControlWrench::default(), DT, &p);
        }
        assert!((est.force.x - 0.6321).abs() < 1e-4);
    }

    #[test]
    fn zero_residual_stays_zero_and_hover_balances() {
        let p = VehicleParams::default();
        let u = ControlWrench::new(p.m_t * p.g, Vec3::zeros());
        let accel = Vec3::new(0.0, 0.0, p.g);
        let mut est = WrenchEstimate::default();
        for k in 0..200 {
            est = update_flying(&est, &imu(k as f64 * DT, accel, Vec3::zeros()), None, &u, DT, &p);
            assert!(est.force.norm() < 1e-12);
            assert!(est.moment.norm() < 1e-12);
        }
    }

    #[test]
    fn estimate_decays_at_gain_rate() {
        let p = VehicleParams::default();
        let mut est = WrenchEstimate {
            force: Vec3::new(2.0, 0.0, 0.0),
            memory: Some(ObserverMemory::Flying {
                force_residual: Vec3::zeros(),
                momentum: Vec3::zeros(),
                moment_terms: Vec3::zeros(),
                wheel_momentum: [0.0; 2],
            }),
            ..Default::default()
        };
        for k in 1..=100 {
            est = update_flying(&est, &imu(k as f64 * DT, Vec3::zeros(), Vec3::zeros()), None, &ControlWrench::default(), DT, &p);
        }
        assert_relative_eq!(est.force.x, 2.0 * (-p.k_f * 0.5).exp(), max_relative = 1e-12);
    }

    #[test]
    fn moment_observer_tracks_constant_external_moment() {
        // Simulated pure rotation under a constant external moment, no input.
        let p = VehicleParams::default().without_wheels();
        let me = Vec3::new(0.02, -0.01, 0.03);
        let mut omega = Vec3::zeros();
        let mut est = WrenchEstimate::default();
        let h = 1e-4;
        for k in 0..=400 {
            est = update_flying(&est, &imu(k as f64 * DT, Vec3::zeros(), omega), None, &ControlWrench::default(), DT, &p);
            for _ in 0..50 {
                let inertia = p.total_inertia();
                let wdot = inertia.try_inverse().unwrap() * (me - omega.cross(&(inertia * omega)));
                omega += wdot * h;
            }
        }
        assert!((est.moment - me).norm() < 1e-3 * me.norm() + 1e-5, "{:?}", est.moment);
    }

    #[test]
    fn first_sample_initialises_moment_from_momentum() {
        let p = VehicleParams::default().without_wheels();
        let gyro = Vec3::new(0.1, 0.0, 0.0);
        let est = update_flying(&WrenchEstimate::default(), &imu(0.0, Vec3::zeros(), gyro), None, &ControlWrench::default(), DT, &p);
        assert_relative_eq!(est.moment.x, p.k_m * p.i_t[0] * 0.1);
    }

    #[test]
    fn rolling_straight_line_has_no_force() {
        let p = VehicleParams::default();
        let enc = EncoderSample { t: 0.0, gamma_l: 3.0, gamma_r: 3.0, gamma_dot_l: 0.0, gamma_dot_r: 0.0 };
        let mut est = WrenchEstimate::default();
        for _ in 0..500 {
            est = update_rolling(&est, &enc, &Vec3::zeros(), &ControlWrench::default(), 0.0, DT, &p);
        }
        assert!(est.force.norm() < 1e-12);
    }

    #[test]
    fn rolling_turn_centripetal_force() {
        let p = VehicleParams::default();
        let enc = EncoderSample { t: 0.0, gamma_l: 1.0, gamma_r: 3.0, gamma_dot_l: 0.0, gamma_dot_r: 0.0 };
        let mut est = WrenchEstimate::default();
        for _ in 0..2000 {
            est = update_rolling(&est, &enc, &Vec3::zeros(), &ControlWrench::default(), 0.0, DT, &p);
        }
        let expected = p.m_t * p.wheel_radius.powi(2) / (4.0 * p.half_shaft) * 2.0 * 4.0;
        assert!((expected - 1.837).abs() < 1e-3);
        assert_relative_eq!(est.force.y, expected, max_relative = 1e-9);
        assert_eq!(est.force.z, 0.0);
    }

    #[test]
    fn rolling_yaw_moment_first_order_response() {
        let p = VehicleParams::default();
        let diff_rate = 0.8;
        let enc = EncoderSample { t: 0.0, gamma_l: 0.0, gamma_r: 0.0, gamma_dot_l: -diff_rate / 2.0, gamma_dot_r: diff_rate / 2.0 };
        let target = (p.wheel_radius / (2.0 * p.half_shaft) * p.i_t[2]
            + p.m_w * p.half_shaft * p.wheel_radius
            + p.i_w * p.half_shaft / p.wheel_radius)
            * diff_rate;
        let mut est = update_rolling(&WrenchEstimate::default(), &enc, &Vec3::zeros(), &ControlWrench::default(), 0.0, DT, &p);
        for k in 1..=200 {
            est = update_rolling(&est, &enc, &Vec3::zeros(), &ControlWrench::default(), 0.0, DT, &p);
            let t = k as f64 * DT;
            let expected = target * (1.0 - (-p.k_m * t).exp());
            assert!((est.moment.z - expected).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn differentiator_recovers_constant_acceleration() {
        let mut d = EncoderDifferentiator::default();
        let mut last = None;
        for k in 0..10 {
            let t = k as f64 * DT;
            last = Some(d.sample(t, 2.0 * t, -3.0 * t + 1.0));
        }
        let s = last.unwrap();
        assert_relative_eq!(s.gamma_dot_l, 2.0, epsilon = 1e-9);
        assert_relative_eq!(s.gamma_dot_r, -3.0, epsilon = 1e-9);
    }

    #[test]
    fn metric_examples() {
        let p = VehicleParams::default();
        let est = WrenchEstimate { force: Vec3::new(3.0, 4.0, 0.0), ..Default::default() };
        assert_relative_eq!(collision_metric(&est, &MetricWeights::force_only()), 25.0);
        assert_eq!(collision_metric(&WrenchEstimate::default(), &MetricWeights::balanced(&p)), 0.0);
        let est = WrenchEstimate { moment: Vec3::new(0.0, 0.0, 0.3125), ..Default::default() };
        assert_relative_eq!(collision_metric(&est, &MetricWeights::balanced(&p)), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn detector_examples() {
        let below: Vec<_> = (0..100).map(|k| (k as f64 * DT, 0.5)).collect();
        assert!(detect_collisions(&below, 1.0, 0.3).is_empty());

        let step: Vec<_> = (0..400).map(|k| {
            let t = k as f64 * DT;
            (t, if t >= 1.0 - 1e-12 { 2.0 } else { 0.0 })
        }).collect();
        let events = detect_collisions(&step, 1.0, 0.3);
        assert_eq!(events.len(), 1);
        assert!((events[0] - 1.0).abs() < 1e-9);

        // two separate crossings 0.1 s apart
        let stream: Vec<_> = (0..400).map(|k| {
            let t = k as f64 * DT;
            let hit = (1.0..1.02).contains(&t) || (1.1..1.12).contains(&t);
            (t, if hit { 2.0 } else { 0.0 })
        }).collect();
        let crossings = stream.windows(2).filter(|w| w[0].1 < 1.0 && w[1].1 >= 1.0).count();
        assert_eq!(crossings, 2);
        assert_eq!(detect_collisions(&stream, 1.0, 0.3).len(), 1);
    }

    #[test]
    fn sustained_contact_repeats_each_period() {
        let step: Vec<_> = (0..400).map(|k| (k as f64 * DT, if k >= 100 { 2.0 } else { 0.0 })).collect();
        let mut det = CollisionDetector::new(1.0, 0.05).with_repeat(Some(0.3));
        let events: Vec<f64> = step.iter().filter(|(t, w)| det.observe(*t, *w)).map(|(t, _)| *t).collect();
        assert!(events.len() >= 4, "{events:?}");
        for pair in events.windows(2) {
            let gap = pair[1] - pair[0];
            assert!((0.3..0.3 + DT + 1e-9).contains(&gap), "{gap}");
        }
    }

    proptest! {
        #[test]
        fn metric_scales_quadratically(
            f in proptest::array::uniform3(-10.0f64..10.0),
            m in proptest::array::uniform3(-2.0f64..2.0),
            wl in -1.0f64..1.0, wr in -1.0f64..1.0, s in -5.0f64..5.0,
        ) {
            let p = VehicleParams::default();
            let w = MetricWeights::balanced(&p);
            let est = WrenchEstimate { force: Vec3::from(f), moment: Vec3::from(m), wheel_l: wl, wheel_r: wr, memory: None };
            let a = collision_metric(&est.scaled(s), &w);
            let b = s * s * collision_metric(&est, &w);
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }

        #[test]
        fn detector_event_count_is_bounded(
            values in proptest::collection::vec(0.0f64..3.0, 10..600),
            refractory in 0.01f64..0.5,
        ) {
            let stream: Vec<_> = values.iter().enumerate().map(|(k, w)| (k as f64 * DT, *w)).collect();
            let span = stream.last().unwrap().0 - stream[0].0;
            let events = detect_collisions(&stream, 1.0, refractory);
            let bound = (span / refractory).ceil() as usize + 1;
            prop_assert!(events.len() <= bound);
            for pair in events.windows(2) {
                prop_assert!(pair[1] - pair[0] >= refractory);
            }
        }

        #[test]
        fn wheelless_estimator_matches_encoderless(
            seq in proptest::collection::vec((proptest::array::uniform3(-5.0f64..5.0), proptest::array::uniform3(-2.0f64..2.0), -3.0f64..3.0, -3.0f64..3.0), 2..40),
            thrust in 0.0f64..60.0,
            m in proptest::array::uniform3(-0.5f64..0.5),
        ) {
            let p = VehicleParams::default();
            let wheelless = p.without_wheels();
            let u = ControlWrench::new(thrust, Vec3::from(m));
            let mut a = WrenchEstimate::default();
            let mut b = WrenchEstimate::default();
            for (k, (acc, gyro, gl, gr)) in seq.iter().enumerate() {
                let s = imu(k as f64 * DT, Vec3::from(*acc), Vec3::from(*gyro));
                let e = EncoderSample { t: s.t, gamma_l: *gl, gamma_r: *gr, gamma_dot_l: 0.0, gamma_dot_r: 0.0 };
                a = update_flying(&a, &s, Some(&e), &u, DT, &wheelless);
                b = update_flying(&b, &s, None, &u, DT, &p);
                prop_assert!((a.force - b.force).amax() <= 1e-12);
                prop_assert!((a.moment - b.moment).amax() <= 1e-12);
                prop_assert!(a.wheel_l.abs() <= 1e-12 && b.wheel_l.abs() <= 1e-12);
            }
        }
    }
}
