//! Control allocation: `τ = M† u`.
//!
//! A mixer maps six generic control inputs (forces and torques by default)
//! onto ten output channels. Mixers are defined either by the forward matrix
//! `M` (6×10, inverted at load) or directly by `M†`. Two mixers can be
//! loaded at once; the RC pilot flies through the primary, the companion
//! through the secondary, and RC overrides splice columns of the two.

mod custom;
pub mod pinv;
mod predefined;

use nalgebra::{DMatrix, SMatrix, SVector};
use thiserror::Error;

use crate::motor_model::{self, Environment, MotorDescriptor};

pub use custom::{load_custom, write_custom_params, CustomMixerWarning, MixerSlot};
pub use predefined::{load_predefined, mixer_from_motors, PredefinedMixer};

pub const NUM_INPUTS: usize = 6;
pub const NUM_OUTPUTS: usize = 10;

/// Forward mixing matrix, rows indexed by input and columns by channel.
pub type MixMatrix = SMatrix<f64, NUM_INPUTS, NUM_OUTPUTS>;
/// Applied mixing matrix `M†`, rows indexed by channel.
pub type InverseMatrix = SMatrix<f64, NUM_OUTPUTS, NUM_INPUTS>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocationError {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("unknown mixer '{0}'")]
    UnknownMixer(String),
    #[error("invalid mixer parameters: {}", .0.join(", "))]
    Validation(Vec<String>),
}

/// Generic mixer input; `[Fx, Fy, Fz, Qx, Qy, Qz]` for the multirotor mixers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput(pub SVector<f64, NUM_INPUTS>);

impl ControlInput {
    pub fn new(values: [f64; NUM_INPUTS]) -> Self {
        Self(SVector::from(values))
    }

    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn force_torque(f: [f64; 3], q: [f64; 3]) -> Self {
        Self::new([f[0], f[1], f[2], q[0], q[1], q[2]])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn as_array(&self) -> [f64; NUM_INPUTS] {
        self.0.into()
    }
}

/// Raw per-channel mixer output, before saturation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActuatorCommandVector(pub SVector<f64, NUM_OUTPUTS>);

impl ActuatorCommandVector {
    pub fn as_array(&self) -> [f64; NUM_OUTPUTS] {
        self.0.into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutputKind {
    Motor,
    Servo,
    Gpio,
    Aux,
}

impl OutputKind {
    pub fn code(self) -> i64 {
        match self {
            OutputKind::Motor => 0,
            OutputKind::Servo => 1,
            OutputKind::Gpio => 2,
            OutputKind::Aux => 3,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        Some(match code {
            0 => OutputKind::Motor,
            1 => OutputKind::Servo,
            2 => OutputKind::Gpio,
            3 => OutputKind::Aux,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OutputChannelConfig {
    pub kind: OutputKind,
    /// PWM update rate (Hz).
    pub rate: u32,
}

impl OutputChannelConfig {
    pub const fn new(kind: OutputKind, rate: u32) -> Self {
        Self { kind, rate }
    }
}

pub type ChannelHeaders = [OutputChannelConfig; NUM_OUTPUTS];

/// Which matrix the stored values describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixForm {
    /// `M`, inverted when the mixer is loaded.
    Forward,
    /// `M†`, applied as-is. Stored transposed so the layout is still 6×10.
    Inverse,
}

impl MatrixForm {
    pub fn code(self) -> i64 {
        match self {
            MatrixForm::Forward => 0,
            MatrixForm::Inverse => 1,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(MatrixForm::Forward),
            1 => Some(MatrixForm::Inverse),
            _ => None,
        }
    }
}

/// A mixer definition: 60 matrix values and 20 header values.
#[derive(Debug, Clone, PartialEq)]
pub struct MixerConfig {
    pub name: String,
    pub form: MatrixForm,
    /// Entry `(r, c)` couples input `r` with channel `c`, in whichever form
    /// `form` says.
    pub matrix: MixMatrix,
    pub channels: ChannelHeaders,
}

impl MixerConfig {
    pub fn validate(&self) -> Result<(), AllocationError> {
        let mut problems = Vec::new();
        for r in 0..NUM_INPUTS {
            for c in 0..NUM_OUTPUTS {
                if !self.matrix[(r, c)].is_finite() {
                    problems.push(format!("matrix ({r}, {c}) not finite"));
                }
            }
        }
        for (c, ch) in self.channels.iter().enumerate() {
            if ch.rate == 0 {
                problems.push(format!("channel {c} rate must be positive"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(AllocationError::Validation(problems))
        }
    }
}

/// A validated mixer with both `M` and `M†` resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedMixer {
    pub config: MixerConfig,
    pub forward: MixMatrix,
    pub inverse: InverseMatrix,
    pub rank: usize,
}

impl LoadedMixer {
    pub fn load(config: MixerConfig) -> Result<Self, AllocationError> {
        config.validate()?;
        let (forward, inverse, rank) = match config.form {
            MatrixForm::Forward => {
                let p = pinv::pseudoinverse(&to_dynamic(&config.matrix), None)?;
                (config.matrix, InverseMatrix::from_iterator(p.matrix.iter().copied()), p.rank)
            }
            MatrixForm::Inverse => {
                let inverse = config.matrix.transpose();
                let p = pinv::pseudoinverse(&to_dynamic(&inverse), None)?;
                (MixMatrix::from_iterator(p.matrix.iter().copied()), inverse, p.rank)
            }
        };
        Ok(Self {
            config,
            forward,
            inverse,
            rank,
        })
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn channels(&self) -> &ChannelHeaders {
        &self.config.channels
    }

    pub fn mix(&self, u: &ControlInput) -> ActuatorCommandVector {
        mix(self, u)
    }

    /// Moore-Penrose residuals of the stored `(M, M†)` pair.
    pub fn residuals(&self) -> [f64; 4] {
        pinv::moore_penrose_residuals(&to_dynamic(&self.forward), &to_dynamic(&self.inverse))
    }
}

pub(crate) fn to_dynamic<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_iterator(R, C, m.iter().copied())
}

/// Pseudoinverse of a 6×10 mixing matrix.
pub fn pseudoinverse(m: &MixMatrix, sv_tolerance: Option<f64>) -> Result<InverseMatrix, AllocationError> {
    let p = pinv::pseudoinverse(&to_dynamic(m), sv_tolerance)?;
    Ok(InverseMatrix::from_iterator(p.matrix.iter().copied()))
}

pub fn mix(mixer: &LoadedMixer, u: &ControlInput) -> ActuatorCommandVector {
    ActuatorCommandVector(mixer.inverse * u.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct OverrideState {
    /// RC pilot owns the torque inputs `Q`.
    pub attitude_override: bool,
    /// RC pilot owns the force inputs `F`.
    pub throttle_override: bool,
    pub offboard_active: bool,
}

impl OverrideState {
    /// All eight combinations, in binary order.
    pub fn all() -> impl Iterator<Item = OverrideState> {
        (0..8u8).map(|bits| OverrideState {
            attitude_override: bits & 1 != 0,
            throttle_override: bits & 2 != 0,
            offboard_active: bits & 4 != 0,
        })
    }

    /// Whether input `index` of `u` is taken from the primary mixer.
    pub fn input_uses_primary(&self, index: usize) -> bool {
        if !self.offboard_active {
            return true;
        }
        if index < 3 {
            self.throttle_override
        } else {
            self.attitude_override
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixerSource {
    Primary,
    Secondary,
}

/// The mixer actually applied on a tick.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveMixer {
    pub inverse: InverseMatrix,
    pub channels: ChannelHeaders,
    pub sources: [MixerSource; NUM_INPUTS],
}

impl EffectiveMixer {
    pub fn mix(&self, u: &ControlInput) -> ActuatorCommandVector {
        ActuatorCommandVector(self.inverse * u.0)
    }
}

/// Splices `M†` column by column: force columns follow the throttle
/// override, torque columns the attitude override. Headers always come from
/// the primary.
pub fn blend_mixers(primary: &LoadedMixer, secondary: &LoadedMixer, ov: OverrideState) -> EffectiveMixer {
    let mut inverse = secondary.inverse;
    let mut sources = [MixerSource::Secondary; NUM_INPUTS];
    for (col, source) in sources.iter_mut().enumerate() {
        if ov.input_uses_primary(col) {
            inverse.set_column(col, &primary.inverse.column(col));
            *source = MixerSource::Primary;
        }
    }
    EffectiveMixer {
        inverse,
        channels: primary.config.channels,
        sources,
    }
}

/// Per-channel motor model used when the mixer allocates `Ω²`.
#[derive(Debug, Clone, Copy)]
pub struct MotorConversion<'a> {
    pub motors: &'a [MotorDescriptor],
    pub env: &'a Environment,
}

/// Post-processing of the mixer output into channel commands.
///
/// With a motor model, motor entries are `Ω²` and go through the
/// steady-state voltage equation; otherwise they are throttle setpoints.
/// Motors clamp to `[0, 1]`, servos to `[−1, 1]`; gpio and aux channels
/// carry `external` through untouched. A motor channel without a
/// descriptor outputs 0.
pub fn output_stage(
    tau: &ActuatorCommandVector,
    channels: &ChannelHeaders,
    motor_model: Option<MotorConversion<'_>>,
    external: &[f64; NUM_OUTPUTS],
) -> [f64; NUM_OUTPUTS] {
    let mut out = [0.0; NUM_OUTPUTS];
    for (c, ch) in channels.iter().enumerate() {
        let raw = tau.0[c];
        out[c] = match ch.kind {
            OutputKind::Motor => {
                let setpoint = match motor_model {
                    Some(conv) => match conv.motors.iter().find(|m| m.channel == c) {
                        Some(m) => {
                            let omega = raw.max(0.0).sqrt();
                            motor_model::omega_to_throttle(omega, &m.motor, &m.prop, conv.env.rho)
                        }
                        None => 0.0,
                    },
                    None => raw,
                };
                clamp_finite(setpoint, 0.0, 1.0)
            }
            OutputKind::Servo => clamp_finite(raw, -1.0, 1.0),
            OutputKind::Gpio | OutputKind::Aux => external[c],
        };
    }
    out
}

fn clamp_finite(v: f64, lo: f64, hi: f64) -> f64 {
    if v.is_nan() {
        lo.max(0.0).min(hi)
    } else {
        v.clamp(lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motor_model::{MotorGeometry, MotorParams, PropellerParams};

    fn headers(kind: OutputKind) -> ChannelHeaders {
        [OutputChannelConfig::new(kind, 490); NUM_OUTPUTS]
    }

    #[test]
    fn vtail_examples() {
        let vtail = LoadedMixer::load(load_predefined("fixedwing_vtail").unwrap()).unwrap();
        let tau = vtail.mix(&ControlInput::new([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]));
        assert_eq!(tau.as_array(), [0.0, -0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let tau = vtail.mix(&ControlInput::new([0.1, 0.0, 0.0, 0.5, 0.0, 0.0]));
        assert_eq!(tau.as_array(), [0.1, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let tau = vtail.mix(&ControlInput::zeros());
        assert_eq!(tau.as_array(), [0.0; NUM_OUTPUTS]);
    }

    #[test]
    fn passthrough_is_identity() {
        let pt = LoadedMixer::load(load_predefined("passthrough").unwrap()).unwrap();
        let u = [0.1, -0.2, 0.3, -0.4, 0.5, -0.6];
        let tau = pt.mix(&ControlInput::new(u));
        assert_eq!(&tau.as_array()[..6], &u);
        assert_eq!(&tau.as_array()[6..], &[0.0; 4]);
    }

    #[test]
    fn blend_corner_cases() {
        let primary = LoadedMixer::load(load_predefined("quadrotor_x").unwrap()).unwrap();
        let secondary = LoadedMixer::load(load_predefined("passthrough").unwrap()).unwrap();
        let all = OverrideState {
            attitude_override: true,
            throttle_override: true,
            offboard_active: true,
        };
        assert_eq!(blend_mixers(&primary, &secondary, all).inverse, primary.inverse);
        let none = OverrideState {
            offboard_active: true,
            ..Default::default()
        };
        let eff = blend_mixers(&primary, &secondary, none);
        assert_eq!(eff.inverse, secondary.inverse);
        assert_eq!(eff.channels, primary.config.channels);
        for ov in OverrideState::all() {
            assert_eq!(blend_mixers(&primary, &primary, ov).inverse, primary.inverse);
        }
    }

    #[test]
    fn output_stage_clamps_without_motor_model() {
        let mut tau = ActuatorCommandVector::default();
        tau.0[0] = 1.3;
        tau.0[1] = -0.2;
        let out = output_stage(&tau, &headers(OutputKind::Motor), None, &[0.0; NUM_OUTPUTS]);
        assert_eq!(out[0], 1.0);
        assert_eq!(out[1], 0.0);

        let mut h = headers(OutputKind::Servo);
        h[9] = OutputChannelConfig::new(OutputKind::Aux, 50);
        tau.0[9] = 0.7;
        let mut ext = [0.0; NUM_OUTPUTS];
        ext[9] = 0.25;
        let out = output_stage(&tau, &h, None, &ext);
        assert_eq!(out[0], 1.0);
        assert_eq!(out[1], -0.2);
        assert_eq!(out[9], 0.25);
    }

    fn bench_descriptor(channel: usize) -> MotorDescriptor {
        MotorDescriptor {
            channel,
            geometry: MotorGeometry::planar(0.25, 0.0, 1.0),
            prop: PropellerParams {
                c_t: 0.1,
                c_q: 0.01,
                diameter: 0.2,
            },
            motor: MotorParams {
                resistance: 0.1,
                k_q: 0.01,
                k_v: 0.01,
                i0: 1.0,
                v_max: 12.0,
            },
        }
    }

    #[test]
    fn output_stage_with_motor_model() {
        let motors = [bench_descriptor(0), bench_descriptor(1)];
        let env = Environment { rho: 1.225, g: 9.81 };
        let conv = MotorConversion {
            motors: &motors,
            env: &env,
        };
        let mut tau = ActuatorCommandVector::default();
        tau.0[1] = 400.0 * 400.0;
        tau.0[2] = 5.0;
        let out = output_stage(&tau, &headers(OutputKind::Motor), Some(conv), &[0.0; NUM_OUTPUTS]);
        // Zero speed needs i₀R = 0.1 V of the 12 V supply.
        assert!((out[0] - 0.1 / 12.0).abs() < 1e-15);
        // (R C_Q ρ D⁵ Ω²/(4π² K_Q) + i₀R + K_V Ω)/V_max at Ω = 400
        let expect = (0.1 * 0.01 * 1.225 * 0.000_32 * 160_000.0 / (39.478_417_604_357_43 * 0.01)
            + 0.1
            + 0.01 * 400.0)
            / 12.0;
        assert!((out[1] - expect).abs() < 1e-12);
        // No descriptor for channel 2.
        assert_eq!(out[2], 0.0);
    }
}
