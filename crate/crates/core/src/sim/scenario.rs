//! Scenario files (TOML).

use std::collections::BTreeMap;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::rc_script::RcScript;
use super::sensors::SensorConfig;
use crate::companion::CompanionConfig;
use crate::motor_model::{Environment, MotorDescriptor, MotorRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    pub mass: f64,
    pub inertia: [[f64; 3]; 3],
    /// Linear drag coefficient (N per m/s).
    #[serde(default)]
    pub drag: f64,
    /// Rotor lag time constant (s); absent means instantaneous.
    #[serde(default)]
    pub motor_lag: Option<f64>,
    pub motors: Vec<MotorRecord>,
}

impl VehicleConfig {
    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.inertia[r][c])
    }

    pub fn motor_descriptors(&self) -> Vec<MotorDescriptor> {
        self.motors.iter().copied().map(Into::into).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct InitialState {
    /// NED (m).
    pub position: [f64; 3],
    /// Body frame (m/s).
    pub velocity: [f64; 3],
    /// Roll, pitch, yaw (rad).
    pub attitude: [f64; 3],
    /// Body rates (rad/s).
    pub rates: [f64; 3],
}

impl InitialState {
    pub fn attitude_quaternion(&self) -> UnitQuaternion<f64> {
        let [r, p, y] = self.attitude;
        UnitQuaternion::from_euler_angles(r, p, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentConfig {
    pub rho: f64,
    pub g: f64,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        let e = Environment::default();
        Self { rho: e.rho, g: e.g }
    }
}

impl From<EnvironmentConfig> for Environment {
    fn from(e: EnvironmentConfig) -> Self {
        Environment { rho: e.rho, g: e.g }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FirmwareSection {
    /// A predefined mixer name, `general` (built from the vehicle's motors),
    /// or `custom` (taken from the `MIX_PRI_*` entries in `params`).
    pub primary_mixer: Option<String>,
    pub secondary_mixer: Option<String>,
    /// Feed truth attitude to the firmware controller instead of its estimate.
    pub truth_attitude: bool,
    pub params: BTreeMap<String, toml::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    /// One-way latency in simulated milliseconds.
    pub delay_ms: f64,
    pub jitter_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Simulated seconds.
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rate")]
    pub dynamics_hz: u32,
    #[serde(default = "default_rate")]
    pub offboard_hz: u32,
    #[serde(default)]
    pub environment: EnvironmentConfig,
    pub vehicle: VehicleConfig,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub firmware: FirmwareSection,
    #[serde(default)]
    pub sensors: SensorConfig,
    #[serde(default)]
    pub rc: RcScript,
    #[serde(default)]
    pub companion: Option<CompanionConfig>,
    #[serde(default)]
    pub link: LinkConfig,
}

fn default_rate() -> u32 {
    400
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn offboard_divider(&self) -> u32 {
        self.dynamics_hz / self.offboard_hz
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if self.dynamics_hz == 0 || self.offboard_hz == 0 {
            return bad("rates must be positive".into());
        }
        if self.offboard_hz > self.dynamics_hz || !self.dynamics_hz.is_multiple_of(self.offboard_hz) {
            return bad(format!(
                "offboard_hz {} must divide dynamics_hz {}",
                self.offboard_hz, self.dynamics_hz
            ));
        }
        let env: Environment = self.environment.into();
        env.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        super::dynamics::RigidBody::new(self.vehicle.mass, self.vehicle.inertia_matrix())
            .map_err(|e| ScenarioError::Invalid(format!("vehicle: {e}")))?;
        if !(self.vehicle.drag.is_finite() && self.vehicle.drag >= 0.0) {
            return bad("vehicle drag must be finite and non-negative".into());
        }
        if let Some(lag) = self.vehicle.motor_lag {
            if !(lag.is_finite() && lag >= 0.0) {
                return bad("motor_lag must be finite and non-negative".into());
            }
        }
        let mut seen = [false; crate::control_allocation::NUM_OUTPUTS];
        for m in self.vehicle.motor_descriptors() {
            m.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            if std::mem::replace(&mut seen[m.channel], true) {
                return bad(format!("motor channel {} listed twice", m.channel));
            }
        }
        let init = &self.initial;
        let all = init.position.iter().chain(&init.velocity).chain(&init.attitude).chain(&init.rates);
        if all.into_iter().any(|v| !v.is_finite()) {
            return bad("initial state must be finite".into());
        }
        self.sensors.validate().map_err(ScenarioError::Invalid)?;
        self.rc.validate().map_err(ScenarioError::Invalid)?;
        if let Some(c) = &self.companion {
            c.validate().map_err(ScenarioError::Invalid)?;
        }
        if !(self.link.delay_ms >= 0.0 && self.link.jitter_ms >= 0.0)
            || !self.link.delay_ms.is_finite()
            || !self.link.jitter_ms.is_finite()
        {
            return bad("link delays must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn initial_velocity(&self) -> Vector3<f64> {
        Vector3::from(self.initial.velocity)
    }
}

/// Scenario files shipped with the crate.
pub const BUNDLED: [(&str, &str); 3] = [
    ("quad_triangle_roll", include_str!("../../scenarios/quad_triangle_roll.toml")),
    ("quad_step_roll", include_str!("../../scenarios/quad_step_roll.toml")),
    ("quad_override", include_str!("../../scenarios/quad_override.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
