//! Rigid-body Newton-Euler equations in the body frame, NED inertial frame,
//! integrated with classic RK4.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

/// Body force and torque.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl Wrench {
    pub fn new(force: Vector3<f64>, torque: Vector3<f64>) -> Self {
        Self { force, torque }
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.torque.iter()).all(|v| v.is_finite())
    }
}

/// Truth state. `q` rotates body-frame vectors into NED.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    /// NED position (m).
    pub p: Vector3<f64>,
    /// Body-frame velocity (m/s).
    pub v: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
    /// Body angular rate (rad/s).
    pub w: Vector3<f64>,
}

impl Default for RigidBodyState {
    fn default() -> Self {
        Self {
            p: Vector3::zeros(),
            v: Vector3::zeros(),
            q: UnitQuaternion::identity(),
            w: Vector3::zeros(),
        }
    }
}

impl RigidBodyState {
    pub fn velocity_ned(&self) -> Vector3<f64> {
        self.q * self.v
    }

    pub fn euler(&self) -> (f64, f64, f64) {
        self.q.euler_angles()
    }

    pub fn is_finite(&self) -> bool {
        self.p
            .iter()
            .chain(self.v.iter())
            .chain(self.w.iter())
            .chain(self.q.coords.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBody {
    pub mass: f64,
    pub inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
}

impl RigidBody {
    /// Fails unless `mass > 0` and `inertia` is symmetric positive definite.
    pub fn new(mass: f64, inertia: Matrix3<f64>) -> Result<Self, String> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(format!("mass must be positive, got {mass}"));
        }
        let asym = (inertia - inertia.transpose()).abs().max();
        if !inertia.iter().all(|v| v.is_finite()) || asym > 1e-12 * inertia.abs().max().max(1.0) {
            return Err("inertia must be a finite symmetric matrix".into());
        }
        if inertia.cholesky().is_none() {
            return Err("inertia must be positive definite".into());
        }
        let inertia_inv = inertia.try_inverse().ok_or("inertia is singular")?;
        Ok(Self {
            mass,
            inertia,
            inertia_inv,
        })
    }

    pub fn rotational_energy(&self, w: &Vector3<f64>) -> f64 {
        0.5 * w.dot(&(self.inertia * w))
    }

    /// Angular momentum in NED.
    pub fn angular_momentum_ned(&self, s: &RigidBodyState) -> Vector3<f64> {
        s.q * (self.inertia * s.w)
    }
}

#[derive(Clone, Copy)]
struct Deriv {
    p: Vector3<f64>,
    v: Vector3<f64>,
    q: Quaternion<f64>,
    w: Vector3<f64>,
}

#[derive(Clone, Copy)]
struct Raw {
    p: Vector3<f64>,
    v: Vector3<f64>,
    q: Quaternion<f64>,
    w: Vector3<f64>,
}

impl Raw {
    fn offset(&self, d: &Deriv, h: f64) -> Raw {
        Raw {
            p: self.p + d.p * h,
            v: self.v + d.v * h,
            q: self.q + d.q * h,
            w: self.w + d.w * h,
        }
    }
}

fn derivative(x: &Raw, wrench: &Wrench, body: &RigidBody, gravity_ned: &Vector3<f64>) -> Deriv {
    let rot = UnitQuaternion::from_quaternion(x.q);
    let omega = Quaternion::from_imag(x.w);
    Deriv {
        p: rot * x.v,
        v: wrench.force / body.mass + rot.inverse() * gravity_ned - x.w.cross(&x.v),
        q: x.q * omega * 0.5,
        w: body.inertia_inv * (wrench.torque - x.w.cross(&(body.inertia * x.w))),
    }
}

/// One RK4 step with the wrench held constant across the step. The
/// quaternion is renormalized at the end.
pub fn rk4_step(s: &RigidBodyState, wrench: &Wrench, body: &RigidBody, g: f64, dt: f64) -> RigidBodyState {
    let gravity = Vector3::new(0.0, 0.0, g);
    let x = Raw {
        p: s.p,
        v: s.v,
        q: *s.q.quaternion(),
        w: s.w,
    };
    let k1 = derivative(&x, wrench, body, &gravity);
    let k2 = derivative(&x.offset(&k1, dt / 2.0), wrench, body, &gravity);
    let k3 = derivative(&x.offset(&k2, dt / 2.0), wrench, body, &gravity);
    let k4 = derivative(&x.offset(&k3, dt), wrench, body, &gravity);
    let h = dt / 6.0;
    RigidBodyState {
        p: x.p + (k1.p + k2.p * 2.0 + k3.p * 2.0 + k4.p) * h,
        v: x.v + (k1.v + k2.v * 2.0 + k3.v * 2.0 + k4.v) * h,
        q: UnitQuaternion::from_quaternion(x.q + (k1.q + k2.q * 2.0 + k3.q * 2.0 + k4.q) * h),
        w: x.w + (k1.w + k2.w * 2.0 + k3.w * 2.0 + k4.w) * h,
    }
}
