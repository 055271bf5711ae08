//! Steady-state motor and propeller model.
//!
//! Thrust and torque of a single rotor are quadratic in propeller speed:
//!
//! ```text
//! F = C_T ρ D⁴/(4π²) Ω² ê
//! Q = r × F + C_Q ρ D⁵/(4π²) Ω² d ê
//! ```
//!
//! which makes each rotor a column of the forward mixing matrix acting on
//! `Ω²`. The electrical side balances motor torque
//! `K_Q((V − K_V Ω)/R − i₀)` against propeller drag torque to get the input
//! voltage needed to hold a speed, and from that a normalized throttle.

use std::f64::consts::PI;

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MotorModelError {
    #[error("motor on channel {channel}: {reason}")]
    InvalidMotor { channel: usize, reason: String },
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
}

/// Where a rotor sits and which way it spins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorGeometry {
    /// Center of mass to the rotor axis, body frame (m).
    pub r: Vector3<f64>,
    /// Unit vector along the rotor axis, pointing in the thrust direction.
    pub e_hat: Vector3<f64>,
    /// Sign of the propeller drag torque along `e_hat`.
    pub d: f64,
    /// Angle from body +x, used by the simplified mixers (rad).
    pub theta: f64,
}

impl MotorGeometry {
    /// A rotor in the body x-y plane thrusting along body −z (up in NED).
    ///
    /// `yaw_sign` is the sign of the yaw torque the rotor exerts about body
    /// +z, which is the `d` that appears in the simplified mixer column. The
    /// drag torque acts along `e_hat = −k`, so the axis-relative sign is
    /// `d = −yaw_sign`.
    pub fn planar(arm: f64, theta: f64, yaw_sign: f64) -> Self {
        Self {
            r: Vector3::new(arm * theta.cos(), arm * theta.sin(), 0.0),
            e_hat: Vector3::new(0.0, 0.0, -1.0),
            d: -yaw_sign.signum(),
            theta,
        }
    }

    /// Sign of the yaw torque about body +z for this rotor.
    pub fn yaw_sign(&self) -> f64 {
        (self.d * self.e_hat.z).signum()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.r.iter().all(|v| v.is_finite()) || !self.theta.is_finite() {
            return Err("non-finite geometry".into());
        }
        if (self.e_hat.norm() - 1.0).abs() > 1e-12 {
            return Err(format!("e_hat is not a unit vector (norm {})", self.e_hat.norm()));
        }
        if self.d != 1.0 && self.d != -1.0 {
            return Err(format!("spin direction must be +1 or -1, got {}", self.d));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropellerParams {
    pub c_t: f64,
    pub c_q: f64,
    /// Diameter (m).
    pub diameter: f64,
}

impl PropellerParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.c_t > 0.0 && self.c_q > 0.0 && self.diameter > 0.0) {
            return Err("propeller C_T, C_Q and D must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorParams {
    /// Winding resistance (Ω).
    pub resistance: f64,
    /// Torque constant (N·m/A).
    pub k_q: f64,
    /// Back-EMF constant (V·s/rad).
    pub k_v: f64,
    /// No-load current (A).
    pub i0: f64,
    /// Supply voltage at full throttle (V).
    pub v_max: f64,
}

impl MotorParams {
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.resistance, self.k_q, self.k_v, self.i0, self.v_max];
        if !all.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err("motor R, K_Q, K_V, i0 and V_max must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// Air density (kg/m³).
    pub rho: f64,
    /// Gravitational acceleration (m/s²).
    pub g: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Self { rho: 1.225, g: 9.81 }
    }
}

impl Environment {
    pub fn validate(&self) -> Result<(), MotorModelError> {
        if !(self.rho > 0.0 && self.g > 0.0) {
            return Err(MotorModelError::InvalidEnvironment(
                "rho and g must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Everything needed to model one output channel driving a rotor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorDescriptor {
    pub channel: usize,
    pub geometry: MotorGeometry,
    pub prop: PropellerParams,
    pub motor: MotorParams,
}

impl MotorDescriptor {
    pub fn validate(&self) -> Result<(), MotorModelError> {
        let wrap = |reason: String| MotorModelError::InvalidMotor {
            channel: self.channel,
            reason,
        };
        if self.channel >= crate::control_allocation::NUM_OUTPUTS {
            return Err(wrap(format!("channel index {} out of range", self.channel)));
        }
        self.geometry.validate().map_err(wrap)?;
        self.prop.validate().map_err(wrap)?;
        self.motor.validate().map_err(wrap)
    }
}

/// One record of a motor parameter file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorRecord {
    pub channel: usize,
    pub r: [f64; 3],
    pub e_hat: [f64; 3],
    pub d: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(rename = "C_T")]
    pub c_t: f64,
    #[serde(rename = "C_Q")]
    pub c_q: f64,
    #[serde(rename = "D")]
    pub diameter: f64,
    #[serde(rename = "R")]
    pub resistance: f64,
    #[serde(rename = "K_Q")]
    pub k_q: f64,
    #[serde(rename = "K_V")]
    pub k_v: f64,
    pub i0: f64,
    #[serde(rename = "V_max")]
    pub v_max: f64,
}

impl From<MotorRecord> for MotorDescriptor {
    fn from(rec: MotorRecord) -> Self {
        MotorDescriptor {
            channel: rec.channel,
            geometry: MotorGeometry {
                r: Vector3::from(rec.r),
                e_hat: Vector3::from(rec.e_hat),
                d: rec.d,
                theta: rec.theta,
            },
            prop: PropellerParams {
                c_t: rec.c_t,
                c_q: rec.c_q,
                diameter: rec.diameter,
            },
            motor: MotorParams {
                resistance: rec.resistance,
                k_q: rec.k_q,
                k_v: rec.k_v,
                i0: rec.i0,
                v_max: rec.v_max,
            },
        }
    }
}

impl From<&MotorDescriptor> for MotorRecord {
    fn from(m: &MotorDescriptor) -> Self {
        MotorRecord {
            channel: m.channel,
            r: m.geometry.r.into(),
            e_hat: m.geometry.e_hat.into(),
            d: m.geometry.d,
            theta: m.geometry.theta,
            c_t: m.prop.c_t,
            c_q: m.prop.c_q,
            diameter: m.prop.diameter,
            resistance: m.motor.resistance,
            k_q: m.motor.k_q,
            k_v: m.motor.k_v,
            i0: m.motor.i0,
            v_max: m.motor.v_max,
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct MotorFile {
    motors: Vec<MotorRecord>,
}

/// Parses a TOML motor file made of `[[motors]]` records.
pub fn parse_motor_file(text: &str) -> Result<Vec<MotorDescriptor>, String> {
    let file: MotorFile = toml::from_str(text).map_err(|e| e.to_string())?;
    let motors: Vec<MotorDescriptor> = file.motors.into_iter().map(Into::into).collect();
    for m in &motors {
        m.validate().map_err(|e| e.to_string())?;
    }
    Ok(motors)
}

pub fn motor_file_to_string(motors: &[MotorDescriptor]) -> String {
    let file = MotorFile {
        motors: motors.iter().map(MotorRecord::from).collect(),
    };
    toml::to_string(&file).expect("motor records always serialize")
}

/// `ρ D⁴ / (4π²)`, the shared factor in the thrust equation.
fn thrust_factor(prop: &PropellerParams, rho: f64) -> f64 {
    rho * prop.diameter.powi(4) / (4.0 * PI * PI)
}

/// Thrust and torque vectors (body frame) of one rotor at speed `omega`.
pub fn thrust_torque(
    omega: f64,
    geom: &MotorGeometry,
    prop: &PropellerParams,
    rho: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let w2 = omega * omega;
    let k = thrust_factor(prop, rho);
    let force = prop.c_t * k * w2 * geom.e_hat;
    let drag = prop.c_q * k * prop.diameter * w2 * geom.d * geom.e_hat;
    let torque = geom.r.cross(&force) + drag;
    (force, torque)
}

/// Forward mixing column mapping `Ω²` to the stacked `[F; Q]` of one rotor.
pub fn general_mixer_column(geom: &MotorGeometry, prop: &PropellerParams, rho: f64) -> Vector6<f64> {
    let scale = prop.c_t * thrust_factor(prop, rho);
    let e = geom.e_hat;
    let q = geom.r.cross(&e) + (prop.c_q * prop.diameter * geom.d / prop.c_t) * e;
    scale * Vector6::new(e.x, e.y, e.z, q.x, q.y, q.z)
}

/// Column of the simplified multirotor mixer, `[0, 0, 1, −sinθ, cosθ, d]`.
pub fn simplified_mixer_column(theta: f64, d: f64) -> Vector6<f64> {
    Vector6::new(0.0, 0.0, 1.0, -theta.sin(), theta.cos(), d)
}

fn quadratic_coefficient(motor: &MotorParams, prop: &PropellerParams, rho: f64) -> f64 {
    motor.resistance * prop.c_q * rho * prop.diameter.powi(5) / (4.0 * PI * PI * motor.k_q)
}

/// Steady-state input voltage that holds the rotor at `omega`.
pub fn omega_to_voltage(omega: f64, motor: &MotorParams, prop: &PropellerParams, rho: f64) -> f64 {
    let a = quadratic_coefficient(motor, prop, rho);
    a * omega * omega + motor.i0 * motor.resistance + motor.k_v * omega
}

/// Normalized throttle in `[0, 1]`, assuming voltage scales linearly with duty cycle.
pub fn omega_to_throttle(omega: f64, motor: &MotorParams, prop: &PropellerParams, rho: f64) -> f64 {
    (omega_to_voltage(omega, motor, prop, rho) / motor.v_max).clamp(0.0, 1.0)
}

/// Steady-state rotor speed reached at throttle `delta`; zero below the
/// no-load voltage `i₀R`.
pub fn throttle_to_omega(delta: f64, motor: &MotorParams, prop: &PropellerParams, rho: f64) -> f64 {
    let a = quadratic_coefficient(motor, prop, rho);
    let excess = delta.clamp(0.0, 1.0) * motor.v_max - motor.i0 * motor.resistance;
    if excess <= 0.0 {
        return 0.0;
    }
    // Positive root of aω² + K_V ω − excess = 0, in the cancellation-free form.
    2.0 * excess / (motor.k_v + (motor.k_v * motor.k_v + 4.0 * a * excess).sqrt())
}

/// Torque the motor delivers at `voltage` and `omega`.
pub fn motor_torque(voltage: f64, omega: f64, motor: &MotorParams) -> f64 {
    motor.k_q * ((voltage - motor.k_v * omega) / motor.resistance - motor.i0)
}

/// Aerodynamic drag torque of the propeller at `omega`.
pub fn propeller_torque(omega: f64, prop: &PropellerParams, rho: f64) -> f64 {
    rho * prop.diameter.powi(5) * omega * omega * prop.c_q / (4.0 * PI * PI)
}
