//! Typed parameter store with `name value` text dump/load.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::control_allocation::{
    ChannelHeaders, MixerSlot, PredefinedMixer, NUM_INPUTS, NUM_OUTPUTS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("unknown parameter '{0}'")]
    Unknown(String),
    #[error("parameter '{name}' expects a {expected} value")]
    TypeMismatch { name: String, expected: ParamKind },
    #[error("cannot parse '{text}' as a value for '{name}'")]
    BadValue { name: String, text: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Int,
    Real,
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamKind::Int => "int",
            ParamKind::Real => "real",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
}

impl ParamValue {
    pub fn kind(&self) -> ParamKind {
        match self {
            ParamValue::Int(_) => ParamKind::Int,
            ParamValue::Real(_) => ParamKind::Real,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match *self {
            ParamValue::Int(v) => Some(v),
            ParamValue::Real(_) => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match *self {
            ParamValue::Real(v) => Some(v),
            ParamValue::Int(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v:?}"),
        }
    }
}

/// Read access to explicitly configured parameter values.
pub trait ParamView {
    /// `None` when the parameter was never set.
    fn lookup(&self, name: &str) -> Option<ParamValue>;
}

impl ParamView for BTreeMap<String, ParamValue> {
    fn lookup(&self, name: &str) -> Option<ParamValue> {
        self.get(name).copied()
    }
}

/// Mixer selection stored in `PRIMARY_MIXER` / `SECONDARY_MIXER`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixerSelection {
    Predefined(PredefinedMixer),
    Custom,
}

impl MixerSelection {
    pub const CUSTOM_CODE: i64 = 10;
    /// `SECONDARY_MIXER` value meaning "same as primary".
    pub const UNSET_CODE: i64 = -1;

    pub fn code(self) -> i64 {
        match self {
            MixerSelection::Predefined(m) => PredefinedMixer::ALL
                .iter()
                .position(|p| *p == m)
                .expect("listed") as i64,
            MixerSelection::Custom => Self::CUSTOM_CODE,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        if code == Self::CUSTOM_CODE {
            return Some(MixerSelection::Custom);
        }
        usize::try_from(code)
            .ok()
            .and_then(|i| PredefinedMixer::ALL.get(i))
            .map(|m| MixerSelection::Predefined(*m))
    }

    pub fn from_name(name: &str) -> Option<Self> {
        if name == "custom" {
            return Some(MixerSelection::Custom);
        }
        name.parse::<PredefinedMixer>().ok().map(MixerSelection::Predefined)
    }

    pub fn name(self) -> &'static str {
        match self {
            MixerSelection::Predefined(m) => m.name(),
            MixerSelection::Custom => "custom",
        }
    }
}

pub mod names {
    pub const PRIMARY_MIXER: &str = "PRIMARY_MIXER";
    pub const SECONDARY_MIXER: &str = "SECONDARY_MIXER";
    pub const USE_MOTOR_PARAM: &str = "USE_MOTOR_PARAM";
    pub const RC_DEADBAND: &str = "RC_DEADBAND";
    pub const OFFBOARD_TIMEOUT: &str = "OFFBOARD_TIMEOUT";
    pub const ARM_THR_MAX: &str = "ARM_THR_MAX";
    pub const EST_ALPHA: &str = "EST_ALPHA";
    pub const SERIAL_ECHO: &str = "SERIAL_ECHO";
    pub const STRM_IMU: &str = "STRM_IMU";
    pub const RC_MAX_ANGLE: &str = "RC_MAX_ANGLE";
    pub const RC_MAX_YAW_RATE: &str = "RC_MAX_YAW_RATE";
    pub const RC_THR_SCALE: &str = "RC_THR_SCALE";
    pub const CTRL_ROLL_ANG_P: &str = "CTRL_ROLL_ANG_P";
    pub const CTRL_PITCH_ANG_P: &str = "CTRL_PITCH_ANG_P";
    pub const CTRL_ROLL_RATE_P: &str = "CTRL_ROLL_RATE_P";
    pub const CTRL_ROLL_RATE_I: &str = "CTRL_ROLL_RATE_I";
    pub const CTRL_ROLL_RATE_D: &str = "CTRL_ROLL_RATE_D";
    pub const CTRL_PITCH_RATE_P: &str = "CTRL_PITCH_RATE_P";
    pub const CTRL_PITCH_RATE_I: &str = "CTRL_PITCH_RATE_I";
    pub const CTRL_PITCH_RATE_D: &str = "CTRL_PITCH_RATE_D";
    pub const CTRL_YAW_RATE_P: &str = "CTRL_YAW_RATE_P";
    pub const CTRL_YAW_RATE_I: &str = "CTRL_YAW_RATE_I";
    pub const CTRL_YAW_RATE_D: &str = "CTRL_YAW_RATE_D";
    pub const CTRL_TORQUE_MAX: &str = "CTRL_TORQUE_MAX";
    pub const CTRL_I_MAX: &str = "CTRL_I_MAX";
}

#[derive(Debug, Clone)]
struct Entry {
    value: ParamValue,
    default: ParamValue,
    explicit: bool,
}

/// Firmware parameters. Every name is registered up front with a typed
/// default; reads of unknown names and writes of the wrong type fail.
#[derive(Debug, Clone)]
pub struct ParamStore {
    entries: BTreeMap<String, Entry>,
    revision: u64,
    mixer_revision: u64,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

fn is_mixer_param(name: &str) -> bool {
    name.starts_with("MIX_")
        || name == names::PRIMARY_MIXER
        || name == names::SECONDARY_MIXER
        || name == names::USE_MOTOR_PARAM
}

impl ParamStore {
    pub fn new() -> Self {
        use names::*;
        use ParamValue::{Int, Real};

        let mut s = Self {
            entries: BTreeMap::new(),
            revision: 0,
            mixer_revision: 0,
        };
        let defaults: &[(&str, ParamValue)] = &[
            (PRIMARY_MIXER, Int(0)),
            (SECONDARY_MIXER, Int(MixerSelection::UNSET_CODE)),
            (USE_MOTOR_PARAM, Int(0)),
            (RC_DEADBAND, Real(0.05)),
            (OFFBOARD_TIMEOUT, Real(0.1)),
            (ARM_THR_MAX, Real(0.05)),
            (EST_ALPHA, Real(0.02)),
            (SERIAL_ECHO, Int(0)),
            (STRM_IMU, Int(0)),
            (RC_MAX_ANGLE, Real(0.5)),
            (RC_MAX_YAW_RATE, Real(2.0)),
            (RC_THR_SCALE, Real(4.0)),
            (CTRL_ROLL_ANG_P, Real(6.0)),
            (CTRL_PITCH_ANG_P, Real(6.0)),
            (CTRL_ROLL_RATE_P, Real(0.12)),
            (CTRL_ROLL_RATE_I, Real(0.05)),
            (CTRL_ROLL_RATE_D, Real(0.002)),
            (CTRL_PITCH_RATE_P, Real(0.12)),
            (CTRL_PITCH_RATE_I, Real(0.05)),
            (CTRL_PITCH_RATE_D, Real(0.002)),
            (CTRL_YAW_RATE_P, Real(0.3)),
            (CTRL_YAW_RATE_I, Real(0.05)),
            (CTRL_YAW_RATE_D, Real(0.0)),
            (CTRL_TORQUE_MAX, Real(1.0)),
            (CTRL_I_MAX, Real(0.2)),
        ];
        for (name, v) in defaults {
            s.register(name, *v);
        }
        for slot in [MixerSlot::Primary, MixerSlot::Secondary] {
            s.register(&slot.form_param(), Int(0));
            for r in 0..NUM_INPUTS {
                for c in 0..NUM_OUTPUTS {
                    s.register(&slot.matrix_param(r, c), Real(0.0));
                }
            }
            for c in 0..NUM_OUTPUTS {
                s.register(&slot.type_param(c), Int(3));
                s.register(&slot.rate_param(c), Int(50));
            }
        }
        s
    }

    fn register(&mut self, name: &str, default: ParamValue) {
        self.entries.insert(
            name.to_string(),
            Entry {
                value: default,
                default,
                explicit: false,
            },
        );
    }

    pub fn get(&self, name: &str) -> Result<ParamValue, ParamError> {
        self.entries
            .get(name)
            .map(|e| e.value)
            .ok_or_else(|| ParamError::Unknown(name.to_string()))
    }

    pub fn get_int(&self, name: &str) -> Result<i64, ParamError> {
        self.get(name)?.as_int().ok_or(ParamError::TypeMismatch {
            name: name.to_string(),
            expected: ParamKind::Real,
        })
    }

    pub fn get_real(&self, name: &str) -> Result<f64, ParamError> {
        self.get(name)?.as_real().ok_or(ParamError::TypeMismatch {
            name: name.to_string(),
            expected: ParamKind::Int,
        })
    }

    pub fn kind(&self, name: &str) -> Result<ParamKind, ParamError> {
        Ok(self.get(name)?.kind())
    }

    pub fn set(&mut self, name: &str, value: ParamValue) -> Result<(), ParamError> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| ParamError::Unknown(name.to_string()))?;
        if entry.default.kind() != value.kind() {
            return Err(ParamError::TypeMismatch {
                name: name.to_string(),
                expected: entry.default.kind(),
            });
        }
        entry.value = value;
        entry.explicit = true;
        self.revision += 1;
        if is_mixer_param(name) {
            self.mixer_revision += 1;
        }
        Ok(())
    }

    /// Returns a parameter to its default and forgets that it was set.
    pub fn unset(&mut self, name: &str) -> Result<(), ParamError> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| ParamError::Unknown(name.to_string()))?;
        entry.value = entry.default;
        entry.explicit = false;
        self.revision += 1;
        if is_mixer_param(name) {
            self.mixer_revision += 1;
        }
        Ok(())
    }

    /// Parses `text` according to the parameter's type. Mixer selection
    /// parameters also accept mixer names.
    pub fn parse_value(&self, name: &str, text: &str) -> Result<ParamValue, ParamError> {
        let bad = || ParamError::BadValue {
            name: name.to_string(),
            text: text.to_string(),
        };
        match self.kind(name)? {
            ParamKind::Int => {
                if name == names::PRIMARY_MIXER || name == names::SECONDARY_MIXER {
                    if let Some(sel) = MixerSelection::from_name(text) {
                        return Ok(ParamValue::Int(sel.code()));
                    }
                    if name == names::SECONDARY_MIXER && text == "unset" {
                        return Ok(ParamValue::Int(MixerSelection::UNSET_CODE));
                    }
                }
                text.parse::<i64>().map(ParamValue::Int).map_err(|_| bad())
            }
            ParamKind::Real => text.parse::<f64>().map(ParamValue::Real).map_err(|_| bad()),
        }
    }

    pub fn set_from_str(&mut self, name: &str, text: &str) -> Result<(), ParamError> {
        let value = self.parse_value(name, text)?;
        self.set(name, value)
    }

    pub fn mixer_selection(&self, name: &str) -> Result<Option<MixerSelection>, ParamError> {
        Ok(MixerSelection::from_code(self.get_int(name)?))
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Bumped by every write to a parameter that affects the mixers.
    pub fn mixer_revision(&self) -> u64 {
        self.mixer_revision
    }

    pub fn is_explicit(&self, name: &str) -> bool {
        self.entries.get(name).is_some_and(|e| e.explicit)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// All parameters as `name value` lines, sorted by name.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (name, e) in &self.entries {
            out.push_str(name);
            out.push(' ');
            out.push_str(&e.value.to_string());
            out.push('\n');
        }
        out
    }

    /// Applies a `name value` file. Blank lines and `#` comments are
    /// skipped. Stops at the first bad line; earlier lines stay applied.
    pub fn load_text(&mut self, text: &str) -> Result<usize, ParamError> {
        let mut count = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(ParamError::Parse {
                    line: idx + 1,
                    message: format!("expected 'name value', got '{line}'"),
                });
            };
            self.set_from_str(name, value).map_err(|e| ParamError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            count += 1;
        }
        Ok(count)
    }

    /// Header parameters of `slot` as stored, without validation.
    pub fn raw_headers(&self, slot: MixerSlot) -> Vec<(i64, i64)> {
        (0..NUM_OUTPUTS)
            .map(|c| {
                (
                    self.get_int(&slot.type_param(c)).unwrap_or(-1),
                    self.get_int(&slot.rate_param(c)).unwrap_or(0),
                )
            })
            .collect()
    }

    /// Writes a channel header block into `slot`.
    pub fn set_headers(&mut self, slot: MixerSlot, headers: &ChannelHeaders) {
        for (c, h) in headers.iter().enumerate() {
            self.set(&slot.type_param(c), ParamValue::Int(h.kind.code()))
                .expect("registered");
            self.set(&slot.rate_param(c), ParamValue::Int(h.rate as i64))
                .expect("registered");
        }
    }
}

impl ParamView for ParamStore {
    fn lookup(&self, name: &str) -> Option<ParamValue> {
        self.entries.get(name).filter(|e| e.explicit).map(|e| e.value)
    }
}
