//! First-order complementary attitude filter.
//!
//! Gyro rates are integrated on the quaternion every step; when the
//! accelerometer magnitude is close to `g`, the estimate is pulled a fraction
//! `alpha` of the way toward the tilt the measured gravity implies. Yaw is
//! unobservable from gravity and is left to the gyro.

use nalgebra::{UnitQuaternion, Vector3};

use super::board::ImuSample;

/// Attitude as the rotation taking body-frame vectors into NED.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeEstimate {
    pub q: UnitQuaternion<f64>,
    /// Body angular rate (rad/s).
    pub rate: Vector3<f64>,
}

impl Default for AttitudeEstimate {
    fn default() -> Self {
        Self {
            q: UnitQuaternion::identity(),
            rate: Vector3::zeros(),
        }
    }
}

impl AttitudeEstimate {
    /// `(roll, pitch, yaw)`, ZYX convention.
    pub fn euler(&self) -> (f64, f64, f64) {
        self.q.euler_angles()
    }
}

/// Accelerometer corrections are skipped when `|a|` is off `g` by more than this fraction.
const ACCEL_GATE: f64 = 0.25;

#[derive(Debug, Clone)]
pub struct ComplementaryFilter {
    pub alpha: f64,
    pub g: f64,
    q: UnitQuaternion<f64>,
}

impl ComplementaryFilter {
    pub fn new(alpha: f64, g: f64) -> Self {
        Self {
            alpha,
            g,
            q: UnitQuaternion::identity(),
        }
    }

    pub fn with_attitude(mut self, q: UnitQuaternion<f64>) -> Self {
        self.q = q;
        self
    }

    pub fn attitude(&self) -> UnitQuaternion<f64> {
        self.q
    }

    pub fn reset(&mut self, q: UnitQuaternion<f64>) {
        self.q = q;
    }

    pub fn update(&mut self, imu: &ImuSample, dt: f64) -> AttitudeEstimate {
        let mut q = self.q * UnitQuaternion::from_scaled_axis(imu.gyro * dt);

        let norm = imu.accel.norm();
        if self.alpha > 0.0 && norm > 0.0 && (norm - self.g).abs() <= ACCEL_GATE * self.g {
            // At rest the specific force points up, which is −z in NED.
            let measured_up = q * (imu.accel / norm);
            let up = Vector3::new(0.0, 0.0, -1.0);
            let correction = UnitQuaternion::rotation_between(&measured_up, &up).unwrap_or_else(|| {
                UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
            });
            let partial = UnitQuaternion::from_scaled_axis(correction.scaled_axis() * self.alpha);
            q = partial * q;
        }

        q.renormalize();
        self.q = q;
        AttitudeEstimate {
            q,
            rate: imu.gyro,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_from_tilt() {
        let g = 9.81;
        let tilted = UnitQuaternion::from_euler_angles(0.4, -0.3, 1.0);
        let mut f = ComplementaryFilter::new(0.02, g).with_attitude(tilted);
        let dt = 1.0 / 400.0;
        let mut est = AttitudeEstimate::default();
        for k in 0..(5 * 400) {
            est = f.update(&ImuSample::level(g, k as f64 * dt), dt);
        }
        let (roll, pitch, yaw) = est.euler();
        assert!(roll.abs() < 1e-3 && pitch.abs() < 1e-3, "{roll} {pitch}");
        // Correction is a pure tilt; heading survives.
        assert!((yaw - 1.0).abs() < 0.5);
    }

    #[test]
    fn gyro_only_yaw_integration() {
        let mut f = ComplementaryFilter::new(0.0, 9.81);
        let dt = 0.001;
        let wz = 0.5;
        let imu = ImuSample {
            accel: Vector3::new(0.0, 0.0, -9.81),
            gyro: Vector3::new(0.0, 0.0, wz),
            t: 0.0,
        };
        for _ in 0..1000 {
            f.update(&imu, dt);
        }
        let (r, p, y) = f.attitude().euler_angles();
        assert!(r.abs() < 1e-12 && p.abs() < 1e-12);
        assert!((y - wz).abs() < 1e-9);
    }

    #[test]
    fn free_fall_skips_correction() {
        let tilt = UnitQuaternion::from_euler_angles(0.3, 0.0, 0.0);
        let mut f = ComplementaryFilter::new(0.5, 9.81).with_attitude(tilt);
        let imu = ImuSample {
            accel: Vector3::zeros(),
            gyro: Vector3::zeros(),
            t: 0.0,
        };
        f.update(&imu, 0.01);
        assert!(f.attitude().angle_to(&tilt) < 1e-12);
    }
}
