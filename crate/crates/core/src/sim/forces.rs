//! Forces-and-moments modules. Gravity is applied by the dynamics; these
//! produce everything else.

use nalgebra::Vector3;

use super::dynamics::{RigidBodyState, Wrench};
use crate::control_allocation::NUM_OUTPUTS;
use crate::motor_model::{throttle_to_omega, thrust_torque, Environment, MotorDescriptor};

/// Replaceable forces-and-moments stage.
pub trait ForcesAndMoments {
    fn compute(&mut self, outputs: &[f64; NUM_OUTPUTS], state: &RigidBodyState, dt: f64) -> Wrench;

    /// Current rotor speeds, if the module models rotors.
    fn rotor_speeds(&self) -> &[f64] {
        &[]
    }
}

/// Rotors driven through the steady-state motor model, plus linear drag.
#[derive(Debug, Clone)]
pub struct MotorForces {
    pub motors: Vec<MotorDescriptor>,
    pub env: Environment,
    /// Linear drag coefficient (N per m/s), applied as `−c·v` in body axes.
    pub drag: f64,
    /// First-order rotor lag time constant (s). `None` is instantaneous.
    pub lag: Option<f64>,
    omega: Vec<f64>,
}

impl MotorForces {
    pub fn new(motors: Vec<MotorDescriptor>, env: Environment, drag: f64, lag: Option<f64>) -> Self {
        let omega = vec![0.0; motors.len()];
        Self {
            motors,
            env,
            drag,
            lag,
            omega,
        }
    }

    /// Starts every rotor at the speed `outputs` would settle to.
    pub fn settle(&mut self, outputs: &[f64; NUM_OUTPUTS]) {
        for (w, m) in self.omega.iter_mut().zip(&self.motors) {
            *w = throttle_to_omega(outputs[m.channel], &m.motor, &m.prop, self.env.rho);
        }
    }
}

impl ForcesAndMoments for MotorForces {
    fn compute(&mut self, outputs: &[f64; NUM_OUTPUTS], state: &RigidBodyState, dt: f64) -> Wrench {
        let mut force = -self.drag * state.v;
        let mut torque = Vector3::zeros();
        for (w, m) in self.omega.iter_mut().zip(&self.motors) {
            let target = throttle_to_omega(outputs[m.channel], &m.motor, &m.prop, self.env.rho);
            *w = match self.lag {
                Some(tau) if tau > 0.0 => *w + (target - *w) * (1.0 - (-dt / tau).exp()),
                _ => target,
            };
            let (f, q) = thrust_torque(*w, &m.geometry, &m.prop, self.env.rho);
            force += f;
            torque += q;
        }
        Wrench::new(force, torque)
    }

    fn rotor_speeds(&self) -> &[f64] {
        &self.omega
    }
}

/// Stand-in that ignores the actuators.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantWrench(pub Wrench);

impl ForcesAndMoments for ConstantWrench {
    fn compute(&mut self, _: &[f64; NUM_OUTPUTS], _: &RigidBodyState, _: f64) -> Wrench {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motor_model::{MotorGeometry, MotorParams, PropellerParams};

    fn quad() -> Vec<MotorDescriptor> {
        [(45.0f64, 1.0), (135.0, -1.0), (225.0, 1.0), (315.0, -1.0)]
            .iter()
            .enumerate()
            .map(|(c, &(deg, s))| MotorDescriptor {
                channel: c,
                geometry: MotorGeometry::planar(0.25, deg.to_radians(), s),
                prop: PropellerParams {
                    c_t: 0.1,
                    c_q: 0.01,
                    diameter: 0.254,
                },
                motor: MotorParams {
                    resistance: 0.1,
                    k_q: 0.01,
                    k_v: 0.01,
                    i0: 1.0,
                    v_max: 16.8,
                },
            })
            .collect()
    }

    #[test]
    fn idle_is_drag_only() {
        let mut f = MotorForces::new(quad(), Environment::default(), 0.3, None);
        let s = RigidBodyState {
            v: Vector3::new(1.0, 2.0, 0.0),
            ..Default::default()
        };
        let w = f.compute(&[0.0; NUM_OUTPUTS], &s, 0.0025);
        assert_eq!(w.force, Vector3::new(-0.3, -0.6, 0.0));
        assert_eq!(w.torque, Vector3::zeros());
    }

    #[test]
    fn lag_approaches_target() {
        let mut f = MotorForces::new(quad(), Environment::default(), 0.0, Some(0.05));
        let mut out = [0.0; NUM_OUTPUTS];
        out[..4].fill(0.5);
        let s = RigidBodyState::default();
        f.compute(&out, &s, 0.05);
        let m = &f.motors[0];
        let target = throttle_to_omega(0.5, &m.motor, &m.prop, 1.225);
        assert!((f.rotor_speeds()[0] - target * (1.0 - (-1.0f64).exp())).abs() < 1e-9);
    }
}
