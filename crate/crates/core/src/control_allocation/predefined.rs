//! Hard-coded mixers for common airframes.

use std::fmt;
use std::str::FromStr;

use super::{
    AllocationError, ChannelHeaders, MatrixForm, MixMatrix, MixerConfig, OutputChannelConfig,
    OutputKind, NUM_OUTPUTS,
};
use crate::motor_model::{general_mixer_column, simplified_mixer_column, MotorDescriptor};

const MOTOR_RATE: u32 = 490;
const SERVO_RATE: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredefinedMixer {
    QuadrotorX,
    HexarotorX,
    FixedwingStandard,
    FixedwingVtail,
    Passthrough,
}

impl PredefinedMixer {
    pub const ALL: [PredefinedMixer; 5] = [
        PredefinedMixer::QuadrotorX,
        PredefinedMixer::HexarotorX,
        PredefinedMixer::FixedwingStandard,
        PredefinedMixer::FixedwingVtail,
        PredefinedMixer::Passthrough,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PredefinedMixer::QuadrotorX => "quadrotor_x",
            PredefinedMixer::HexarotorX => "hexarotor_x",
            PredefinedMixer::FixedwingStandard => "fixedwing_standard",
            PredefinedMixer::FixedwingVtail => "fixedwing_vtail",
            PredefinedMixer::Passthrough => "passthrough",
        }
    }

    /// Rotor angles (deg from body +x) and yaw signs of the multirotor frames.
    pub fn rotor_layout(self) -> Option<&'static [(f64, f64)]> {
        match self {
            PredefinedMixer::QuadrotorX => Some(&QUAD_X),
            PredefinedMixer::HexarotorX => Some(&HEX_X),
            _ => None,
        }
    }

    pub fn config(self) -> MixerConfig {
        match self {
            PredefinedMixer::QuadrotorX | PredefinedMixer::HexarotorX => {
                multirotor(self.name(), self.rotor_layout().unwrap())
            }
            PredefinedMixer::FixedwingStandard => fixedwing_standard(),
            PredefinedMixer::FixedwingVtail => fixedwing_vtail(),
            PredefinedMixer::Passthrough => passthrough(),
        }
    }
}

impl fmt::Display for PredefinedMixer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PredefinedMixer {
    type Err = AllocationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| AllocationError::UnknownMixer(s.to_string()))
    }
}

const QUAD_X: [(f64, f64); 4] = [(45.0, 1.0), (135.0, -1.0), (225.0, 1.0), (315.0, -1.0)];
const HEX_X: [(f64, f64); 6] = [
    (30.0, 1.0),
    (90.0, -1.0),
    (150.0, 1.0),
    (210.0, -1.0),
    (270.0, 1.0),
    (330.0, -1.0),
];

pub fn load_predefined(name: &str) -> Result<MixerConfig, AllocationError> {
    Ok(name.parse::<PredefinedMixer>()?.config())
}

fn headers_with(assign: &[(usize, OutputKind, u32)]) -> ChannelHeaders {
    let mut h = [OutputChannelConfig::new(OutputKind::Aux, SERVO_RATE); NUM_OUTPUTS];
    for &(c, kind, rate) in assign {
        h[c] = OutputChannelConfig::new(kind, rate);
    }
    h
}

fn multirotor(name: &str, layout: &[(f64, f64)]) -> MixerConfig {
    let mut matrix = MixMatrix::zeros();
    let mut assign = Vec::new();
    for (c, &(deg, d)) in layout.iter().enumerate() {
        matrix.set_column(c, &simplified_mixer_column(deg.to_radians(), d));
        assign.push((c, OutputKind::Motor, MOTOR_RATE));
    }
    MixerConfig {
        name: name.into(),
        form: MatrixForm::Forward,
        matrix,
        channels: headers_with(&assign),
    }
}

/// Forward mixer built from physical rotor descriptions. Mixer outputs on
/// the motor channels are `Ω²`, so it pairs with `USE_MOTOR_PARAM`.
pub fn mixer_from_motors(name: &str, motors: &[MotorDescriptor], rho: f64) -> MixerConfig {
    let mut matrix = MixMatrix::zeros();
    let mut assign = Vec::new();
    for m in motors {
        matrix.set_column(m.channel, &general_mixer_column(&m.geometry, &m.prop, rho));
        assign.push((m.channel, OutputKind::Motor, MOTOR_RATE));
    }
    MixerConfig {
        name: name.into(),
        form: MatrixForm::Forward,
        matrix,
        channels: headers_with(&assign),
    }
}

/// Builds a 6×10 stored matrix from `M†` rows given as `(channel, [6 coefficients])`.
fn inverse_from_rows(rows: &[(usize, [f64; 6])]) -> MixMatrix {
    let mut m = MixMatrix::zeros();
    for &(c, coeffs) in rows {
        for (r, v) in coeffs.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    m
}

/// Inputs `[δa, δe, δr, δt, 0, 0]`; outputs aileron, elevator, throttle, rudder.
fn fixedwing_standard() -> MixerConfig {
    MixerConfig {
        name: "fixedwing_standard".into(),
        form: MatrixForm::Inverse,
        matrix: inverse_from_rows(&[
            (0, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
            (1, [0.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
            (2, [0.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
            (3, [0.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
        ]),
        channels: headers_with(&[
            (0, OutputKind::Servo, SERVO_RATE),
            (1, OutputKind::Servo, SERVO_RATE),
            (2, OutputKind::Motor, MOTOR_RATE),
            (3, OutputKind::Servo, SERVO_RATE),
        ]),
    }
}

/// Inputs `[δa, δe, δr, δt, 0, 0]`; outputs aileron, left and right
/// ruddervators, throttle.
fn fixedwing_vtail() -> MixerConfig {
    MixerConfig {
        name: "fixedwing_vtail".into(),
        form: MatrixForm::Inverse,
        matrix: inverse_from_rows(&[
            (0, [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
            (1, [0.0, -0.5, 0.5, 0.0, 0.0, 0.0]),
            (2, [0.0, 0.5, 0.5, 0.0, 0.0, 0.0]),
            (3, [0.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
        ]),
        channels: headers_with(&[
            (0, OutputKind::Servo, SERVO_RATE),
            (1, OutputKind::Servo, SERVO_RATE),
            (2, OutputKind::Servo, SERVO_RATE),
            (3, OutputKind::Motor, MOTOR_RATE),
        ]),
    }
}

/// `M† = [I₆; 0]`: the six inputs drive channels 0..6 directly.
fn passthrough() -> MixerConfig {
    let rows: Vec<(usize, [f64; 6])> = (0..6)
        .map(|c| {
            let mut row = [0.0; 6];
            row[c] = 1.0;
            (c, row)
        })
        .collect();
    let assign: Vec<_> = (0..6).map(|c| (c, OutputKind::Motor, MOTOR_RATE)).collect();
    MixerConfig {
        name: "passthrough".into(),
        form: MatrixForm::Inverse,
        matrix: inverse_from_rows(&rows),
        channels: headers_with(&assign),
    }
}
