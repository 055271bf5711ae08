//! Companion-side angle controller emitting physical forces and torques.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::program::AttitudeTarget;
use crate::control_allocation::ControlInput;

/// Vehicle state the companion closes its loops on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    /// Body-to-NED attitude.
    pub q: UnitQuaternion<f64>,
    /// Body rates (rad/s).
    pub w: Vector3<f64>,
    /// NED position (m).
    pub p: Vector3<f64>,
    /// NED velocity (m/s).
    pub v: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompanionGains {
    /// Roll, pitch angle gains (1/s).
    pub angle_p: [f64; 2],
    /// Roll, pitch, yaw rate-loop gains (N·m per rad/s and friends).
    pub rate_p: [f64; 3],
    pub rate_i: [f64; 3],
    pub rate_d: [f64; 3],
    pub integrator_max: f64,
    pub torque_max: f64,
    /// Altitude loop, as commanded vertical acceleration per metre and per m/s.
    pub alt_p: f64,
    pub alt_d: f64,
    /// Vehicle mass the thrust command is scaled by (kg).
    pub mass: f64,
    pub g: f64,
    /// Largest thrust magnitude commanded (N).
    pub thrust_max: f64,
}

impl Default for CompanionGains {
    fn default() -> Self {
        Self {
            angle_p: [8.0, 8.0],
            rate_p: [0.5, 0.5, 0.3],
            rate_i: [0.2, 0.2, 0.1],
            rate_d: [0.005, 0.005, 0.0],
            integrator_max: 0.2,
            torque_max: 2.0,
            alt_p: 4.0,
            alt_d: 3.0,
            mass: 1.5,
            g: 9.81,
            thrust_max: 60.0,
        }
    }
}

impl CompanionGains {
    pub fn validate(&self) -> Result<(), String> {
        let scalars = [self.alt_p, self.alt_d, self.g];
        let all = self
            .angle_p
            .iter()
            .chain(&self.rate_p)
            .chain(&self.rate_i)
            .chain(&self.rate_d)
            .chain(&scalars);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err("companion gains must be finite".into());
        }
        if !(self.mass > 0.0 && self.integrator_max > 0.0 && self.torque_max > 0.0 && self.thrust_max > 0.0) {
            return Err("companion mass and limits must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct CompanionController {
    integral: Vector3<f64>,
    prev_w: Option<Vector3<f64>>,
    altitude_ref: Option<f64>,
}

impl CompanionController {
    pub fn new() -> Self {
        Self::default()
    }

    /// Holds this NED down-coordinate instead of the one seen on the first step.
    pub fn set_altitude_ref(&mut self, z: f64) {
        self.altitude_ref = Some(z);
    }

    /// Returns `[0, 0, F_z, Q_x, Q_y, Q_z]` in newtons and newton-metres,
    /// body frame. `rate_ff` is roll and pitch target-rate feedforward.
    pub fn step(
        &mut self,
        fb: &Feedback,
        target: &AttitudeTarget,
        rate_ff: (f64, f64),
        gains: &CompanionGains,
        dt: f64,
    ) -> ControlInput {
        let (roll, pitch, _) = fb.q.euler_angles();
        let rate_sp = Vector3::new(
            gains.angle_p[0] * (target.roll - roll) + rate_ff.0,
            gains.angle_p[1] * (target.pitch - pitch) + rate_ff.1,
            target.yaw_rate,
        );
        let w_dot = match self.prev_w {
            Some(prev) if dt > 0.0 => (fb.w - prev) / dt,
            _ => Vector3::zeros(),
        };
        self.prev_w = Some(fb.w);

        let mut q = [0.0; 3];
        for i in 0..3 {
            let err = rate_sp[i] - fb.w[i];
            self.integral[i] =
                (self.integral[i] + gains.rate_i[i] * err * dt).clamp(-gains.integrator_max, gains.integrator_max);
            q[i] = (gains.rate_p[i] * err + self.integral[i] - gains.rate_d[i] * w_dot[i])
                .clamp(-gains.torque_max, gains.torque_max);
        }

        let z_ref = *self.altitude_ref.get_or_insert(fb.p.z);
        let accel_down = gains.alt_p * (z_ref - fb.p.z) - gains.alt_d * fb.v.z;
        let tilt = (roll.cos() * pitch.cos()).max(0.5);
        let fz = (gains.mass * (accel_down - gains.g) / tilt).clamp(-gains.thrust_max, 0.0);

        ControlInput::new([0.0, 0.0, fz, q[0], q[1], q[2]])
    }
}
