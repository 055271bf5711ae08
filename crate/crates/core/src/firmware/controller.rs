//! Cascaded attitude controller: angle P loop feeding a rate PID loop that
//! outputs body torques.

use nalgebra::Vector3;

use super::estimator::AttitudeEstimate;
use super::params::{names, ParamError, ParamStore};
use crate::control_allocation::ControlInput;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisGains {
    pub angle_p: f64,
    pub rate_p: f64,
    pub rate_i: f64,
    pub rate_d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    pub roll: AxisGains,
    pub pitch: AxisGains,
    /// Yaw only has a rate loop; `angle_p` is unused.
    pub yaw: AxisGains,
    pub torque_max: f64,
    pub integrator_max: f64,
}

impl ControllerGains {
    pub fn from_params(p: &ParamStore) -> Result<Self, ParamError> {
        use names::*;
        Ok(Self {
            roll: AxisGains {
                angle_p: p.get_real(CTRL_ROLL_ANG_P)?,
                rate_p: p.get_real(CTRL_ROLL_RATE_P)?,
                rate_i: p.get_real(CTRL_ROLL_RATE_I)?,
                rate_d: p.get_real(CTRL_ROLL_RATE_D)?,
            },
            pitch: AxisGains {
                angle_p: p.get_real(CTRL_PITCH_ANG_P)?,
                rate_p: p.get_real(CTRL_PITCH_RATE_P)?,
                rate_i: p.get_real(CTRL_PITCH_RATE_I)?,
                rate_d: p.get_real(CTRL_PITCH_RATE_D)?,
            },
            yaw: AxisGains {
                angle_p: 0.0,
                rate_p: p.get_real(CTRL_YAW_RATE_P)?,
                rate_i: p.get_real(CTRL_YAW_RATE_I)?,
                rate_d: p.get_real(CTRL_YAW_RATE_D)?,
            },
            torque_max: p.get_real(CTRL_TORQUE_MAX)?,
            integrator_max: p.get_real(CTRL_I_MAX)?,
        })
    }

    fn axes(&self) -> [&AxisGains; 3] {
        [&self.roll, &self.pitch, &self.yaw]
    }

    pub fn is_valid(&self) -> bool {
        let finite = self
            .axes()
            .iter()
            .all(|a| [a.angle_p, a.rate_p, a.rate_i, a.rate_d].iter().all(|v| v.is_finite()));
        finite && self.torque_max > 0.0 && self.integrator_max > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttitudeSetpoint {
    /// Roll and pitch angles (rad), yaw rate (rad/s), collective `F_z`.
    Angle {
        roll: f64,
        pitch: f64,
        yaw_rate: f64,
        thrust: f64,
    },
    /// Body rates (rad/s) and collective `F_z`.
    Rate {
        rates: Vector3<f64>,
        thrust: f64,
    },
}

#[derive(Debug, Clone, Default)]
pub struct AttitudeController {
    integral: Vector3<f64>,
    prev_rate: Option<Vector3<f64>>,
}

impl AttitudeController {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.integral = Vector3::zeros();
        self.prev_rate = None;
    }

    pub fn integral(&self) -> Vector3<f64> {
        self.integral
    }

    /// Returns `[0, 0, F_z, Q_x, Q_y, Q_z]`.
    pub fn update(
        &mut self,
        est: &AttitudeEstimate,
        sp: &AttitudeSetpoint,
        gains: &ControllerGains,
        dt: f64,
    ) -> ControlInput {
        let (rate_sp, thrust) = match *sp {
            AttitudeSetpoint::Angle {
                roll,
                pitch,
                yaw_rate,
                thrust,
            } => {
                let (r, p, _) = est.euler();
                (
                    Vector3::new(
                        gains.roll.angle_p * (roll - r),
                        gains.pitch.angle_p * (pitch - p),
                        yaw_rate,
                    ),
                    thrust,
                )
            }
            AttitudeSetpoint::Rate { rates, thrust } => (rates, thrust),
        };

        let rate = est.rate;
        // Derivative on measurement; zero on the first step.
        let rate_dot = match self.prev_rate {
            Some(prev) if dt > 0.0 => (rate - prev) / dt,
            _ => Vector3::zeros(),
        };
        self.prev_rate = Some(rate);

        let mut torque = Vector3::zeros();
        for (i, g) in gains.axes().into_iter().enumerate() {
            let err = rate_sp[i] - rate[i];
            self.integral[i] = (self.integral[i] + g.rate_i * err * dt)
                .clamp(-gains.integrator_max, gains.integrator_max);
            let q = g.rate_p * err + self.integral[i] - g.rate_d * rate_dot[i];
            torque[i] = q.clamp(-gains.torque_max, gains.torque_max);
        }
        ControlInput::new([0.0, 0.0, thrust, torque.x, torque.y, torque.z])
    }
}
