//! IMU and encoder models.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CioError, Result};
use crate::vehicle_model::Vec3;
use crate::wrench_estimator::ImuSample;

/// Sensor noise. Sigmas are standard deviations per delivered sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorNoise {
    pub accel_sigma: f64,
    pub gyro_sigma: f64,
    /// Constant accelerometer bias per body axis, m/s^2.
    pub accel_bias: [f64; 3],
    pub encoder_sigma: f64,
    pub seed: u64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self {
            accel_sigma: 0.05,
            gyro_sigma: 0.002,
            accel_bias: [0.0; 3],
            encoder_sigma: 0.01,
            seed: 1,
        }
    }
}

impl SensorNoise {
    pub fn noiseless() -> Self {
        Self {
            accel_sigma: 0.0,
            gyro_sigma: 0.0,
            accel_bias: [0.0; 3],
            encoder_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("noise.accel_sigma", self.accel_sigma),
            ("noise.gyro_sigma", self.gyro_sigma),
            ("noise.encoder_sigma", self.encoder_sigma),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(CioError::InvalidParameter {
                    name,
                    reason: format!("must be non-negative, got {value}"),
                });
            }
        }
        if !self.accel_bias.iter().all(|b| b.is_finite()) {
            return Err(CioError::InvalidParameter {
                name: "noise.accel_bias",
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn gaussian3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    )
}

/// Corrupts true specific force and rate with bias and white noise.
pub fn imu_model(t: f64, accel: &Vec3, gyro: &Vec3, noise: &SensorNoise, rng: &mut ChaCha8Rng) -> ImuSample {
    let bias = Vec3::from(noise.accel_bias);
    ImuSample {
        t,
        accel: accel + bias + gaussian3(rng) * noise.accel_sigma,
        gyro: gyro + gaussian3(rng) * noise.gyro_sigma,
    }
}

pub fn encoder_model(gamma_l: f64, gamma_r: f64, noise: &SensorNoise, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    (gamma_l + a * noise.encoder_sigma, gamma_r + b * noise.encoder_sigma)
}
