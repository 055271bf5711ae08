use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dynamics::{RigidBodyState, Wrench};
use crate::firmware::ImuSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    /// Per-axis standard deviations.
    pub gyro_noise: f64,
    pub accel_noise: f64,
    pub gyro_bias: [f64; 3],
    pub accel_bias: [f64; 3],
    pub baro_noise: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            gyro_noise: 0.0,
            accel_noise: 0.0,
            gyro_bias: [0.0; 3],
            accel_bias: [0.0; 3],
            baro_noise: 0.0,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.gyro_noise, self.accel_noise, self.baro_noise];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err("sensor noise must be finite and non-negative".into());
        }
        if self.gyro_bias.iter().chain(&self.accel_bias).any(|v| !v.is_finite()) {
            return Err("sensor bias must be finite".into());
        }
        Ok(())
    }
}

/// Magnetic field direction used by the magnetometer stub, NED.
const MAG_NED: [f64; 3] = [0.6, 0.0, 0.8];

#[derive(Debug, Clone)]
pub struct Sensors {
    cfg: SensorConfig,
    rng: ChaCha8Rng,
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("validated sigma").sample(rng)
}

impl Sensors {
    pub fn new(cfg: SensorConfig, seed: u64) -> Self {
        Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn noise3(&mut self, sigma: f64) -> Vector3<f64> {
        let x = gaussian(&mut self.rng, sigma);
        let y = gaussian(&mut self.rng, sigma);
        let z = gaussian(&mut self.rng, sigma);
        Vector3::new(x, y, z)
    }

    /// `wrench` excludes gravity, so `F/m` is the specific force directly.
    pub fn imu(&mut self, state: &RigidBodyState, wrench: &Wrench, mass: f64, t: f64) -> ImuSample {
        let accel_noise = self.noise3(self.cfg.accel_noise);
        let gyro_noise = self.noise3(self.cfg.gyro_noise);
        ImuSample {
            accel: wrench.force / mass + Vector3::from(self.cfg.accel_bias) + accel_noise,
            gyro: state.w + Vector3::from(self.cfg.gyro_bias) + gyro_noise,
            t,
        }
    }

    /// Altitude above the origin (m).
    pub fn baro(&mut self, state: &RigidBodyState) -> f64 {
        -state.p.z + gaussian(&mut self.rng, self.cfg.baro_noise)
    }

    /// Unit field vector in body axes.
    pub fn mag(&self, state: &RigidBodyState) -> Vector3<f64> {
        state.q.inverse() * Vector3::from(MAG_NED)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hover_and_free_fall_readings() {
        let mut s = Sensors::new(SensorConfig::default(), 1);
        let state = RigidBodyState::default();
        let hover = Wrench::new(Vector3::new(0.0, 0.0, -1.5 * 9.81), Vector3::zeros());
        let imu = s.imu(&state, &hover, 1.5, 0.0);
        assert!((imu.accel - Vector3::new(0.0, 0.0, -9.81)).norm() < 1e-15);
        assert_eq!(imu.gyro, Vector3::zeros());
        let fall = s.imu(&state, &Wrench::default(), 1.5, 0.0);
        assert_eq!(fall.accel, Vector3::zeros());
    }

    #[test]
    fn stubs() {
        let mut s = Sensors::new(SensorConfig::default(), 1);
        let state = RigidBodyState {
            p: Vector3::new(0.0, 0.0, -3.0),
            ..Default::default()
        };
        assert_eq!(s.baro(&state), 3.0);
        assert!((s.mag(&state).norm() - 1.0).abs() < 1e-12);
    }
}
