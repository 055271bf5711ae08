//! Message variants and their fixed payload layouts. All multi-byte fields
//! are little-endian.

use crate::firmware::params::ParamValue;

use super::ProtocolError;

pub const MAX_PAYLOAD: usize = 255;
pub const OFFBOARD_PAYLOAD_LEN: usize = 24;
pub const IMU_PAYLOAD_LEN: usize = 32;
pub const MAX_PARAM_NAME: usize = 64;

pub mod ids {
    pub const HEARTBEAT: u8 = 0x01;
    pub const OFFBOARD_PASSTHROUGH: u8 = 0x10;
    pub const OFFBOARD_SETPOINT: u8 = 0x11;
    pub const PARAM_REQUEST: u8 = 0x20;
    pub const PARAM_VALUE: u8 = 0x21;
    pub const IMU_DATA: u8 = 0x30;
    pub const ECHO_REQUEST: u8 = 0x40;
    pub const ECHO_REPLY: u8 = 0x41;
    pub const ACK: u8 = 0x50;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OffboardMode {
    /// `u` goes straight to the mixer.
    Passthrough,
    /// `u = [roll, pitch, yaw_rate, throttle, 0, 0]` for the onboard controller.
    Setpoint,
}

/// Six little-endian `f32`s; the mode travels in the message id so the
/// payload stays at 24 bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffboardCommand {
    pub mode: OffboardMode,
    pub u: [f32; 6],
}

impl OffboardCommand {
    pub fn passthrough(u: [f32; 6]) -> Self {
        Self {
            mode: OffboardMode::Passthrough,
            u,
        }
    }

    pub fn setpoint(u: [f32; 6]) -> Self {
        Self {
            mode: OffboardMode::Setpoint,
            u,
        }
    }

    pub fn payload(&self) -> [u8; OFFBOARD_PAYLOAD_LEN] {
        let mut out = [0u8; OFFBOARD_PAYLOAD_LEN];
        for (chunk, v) in out.chunks_exact_mut(4).zip(self.u) {
            chunk.copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn u_f64(&self) -> [f64; 6] {
        self.u.map(f64::from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuData {
    pub t_us: u64,
    pub accel: [f32; 3],
    pub gyro: [f32; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckCode {
    Ok,
    UnknownParam,
    TypeMismatch,
    Rejected,
}

impl AckCode {
    fn to_byte(self) -> u8 {
        match self {
            AckCode::Ok => 0,
            AckCode::UnknownParam => 1,
            AckCode::TypeMismatch => 2,
            AckCode::Rejected => 3,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => AckCode::Ok,
            1 => AckCode::UnknownParam,
            2 => AckCode::TypeMismatch,
            3 => AckCode::Rejected,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Heartbeat,
    Offboard(OffboardCommand),
    ParamRequest { name: String },
    /// Companion → firmware: set. Firmware → companion: current value.
    ParamValue { name: String, value: ParamValue },
    Imu(ImuData),
    EchoRequest(Vec<u8>),
    EchoReply(Vec<u8>),
    Ack { msg_id: u8, code: AckCode },
}

impl Message {
    pub fn msg_id(&self) -> u8 {
        match self {
            Message::Heartbeat => ids::HEARTBEAT,
            Message::Offboard(c) => match c.mode {
                OffboardMode::Passthrough => ids::OFFBOARD_PASSTHROUGH,
                OffboardMode::Setpoint => ids::OFFBOARD_SETPOINT,
            },
            Message::ParamRequest { .. } => ids::PARAM_REQUEST,
            Message::ParamValue { .. } => ids::PARAM_VALUE,
            Message::Imu(_) => ids::IMU_DATA,
            Message::EchoRequest(_) => ids::ECHO_REQUEST,
            Message::EchoReply(_) => ids::ECHO_REPLY,
            Message::Ack { .. } => ids::ACK,
        }
    }

    pub fn payload(&self) -> Result<Vec<u8>, ProtocolError> {
        let out = match self {
            Message::Heartbeat => Vec::new(),
            Message::Offboard(c) => c.payload().to_vec(),
            Message::ParamRequest { name } => {
                check_name(name)?;
                name.as_bytes().to_vec()
            }
            Message::ParamValue { name, value } => {
                check_name(name)?;
                let mut out = Vec::with_capacity(9 + name.len());
                match value {
                    ParamValue::Int(v) => {
                        out.push(0);
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                    ParamValue::Real(v) => {
                        out.push(1);
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                out.extend_from_slice(name.as_bytes());
                out
            }
            Message::Imu(d) => {
                let mut out = Vec::with_capacity(IMU_PAYLOAD_LEN);
                out.extend_from_slice(&d.t_us.to_le_bytes());
                for v in d.accel.iter().chain(&d.gyro) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out
            }
            Message::EchoRequest(p) | Message::EchoReply(p) => p.clone(),
            Message::Ack { msg_id, code } => vec![*msg_id, code.to_byte()],
        };
        if out.len() > MAX_PAYLOAD {
            return Err(ProtocolError::PayloadOverflow(out.len()));
        }
        Ok(out)
    }

    pub fn parse(msg_id: u8, payload: &[u8]) -> Result<Self, ProtocolError> {
        let bad_len = || ProtocolError::BadLength {
            msg_id,
            len: payload.len(),
        };
        Ok(match msg_id {
            ids::HEARTBEAT => {
                if !payload.is_empty() {
                    return Err(bad_len());
                }
                Message::Heartbeat
            }
            ids::OFFBOARD_PASSTHROUGH | ids::OFFBOARD_SETPOINT => {
                if payload.len() != OFFBOARD_PAYLOAD_LEN {
                    return Err(bad_len());
                }
                let mut u = [0f32; 6];
                for (v, chunk) in u.iter_mut().zip(payload.chunks_exact(4)) {
                    *v = f32::from_le_bytes(chunk.try_into().unwrap());
                }
                let mode = if msg_id == ids::OFFBOARD_PASSTHROUGH {
                    OffboardMode::Passthrough
                } else {
                    OffboardMode::Setpoint
                };
                Message::Offboard(OffboardCommand { mode, u })
            }
            ids::PARAM_REQUEST => Message::ParamRequest {
                name: parse_name(msg_id, payload)?,
            },
            ids::PARAM_VALUE => {
                if payload.len() < 10 {
                    return Err(bad_len());
                }
                let raw: [u8; 8] = payload[1..9].try_into().unwrap();
                let value = match payload[0] {
                    0 => ParamValue::Int(i64::from_le_bytes(raw)),
                    1 => ParamValue::Real(f64::from_le_bytes(raw)),
                    t => return Err(ProtocolError::Malformed(format!("param type tag {t}"))),
                };
                Message::ParamValue {
                    name: parse_name(msg_id, &payload[9..])?,
                    value,
                }
            }
            ids::IMU_DATA => {
                if payload.len() != IMU_PAYLOAD_LEN {
                    return Err(bad_len());
                }
                let t_us = u64::from_le_bytes(payload[..8].try_into().unwrap());
                let mut vals = [0f32; 6];
                for (v, chunk) in vals.iter_mut().zip(payload[8..].chunks_exact(4)) {
                    *v = f32::from_le_bytes(chunk.try_into().unwrap());
                }
                Message::Imu(ImuData {
                    t_us,
                    accel: [vals[0], vals[1], vals[2]],
                    gyro: [vals[3], vals[4], vals[5]],
                })
            }
            ids::ECHO_REQUEST => Message::EchoRequest(payload.to_vec()),
            ids::ECHO_REPLY => Message::EchoReply(payload.to_vec()),
            ids::ACK => {
                if payload.len() != 2 {
                    return Err(bad_len());
                }
                let code = AckCode::from_byte(payload[1])
                    .ok_or_else(|| ProtocolError::Malformed(format!("ack code {}", payload[1])))?;
                Message::Ack {
                    msg_id: payload[0],
                    code,
                }
            }
            other => return Err(ProtocolError::UnknownMessage(other)),
        })
    }
}

fn check_name(name: &str) -> Result<(), ProtocolError> {
    if name.is_empty() || name.len() > MAX_PARAM_NAME || !name.is_ascii() {
        return Err(ProtocolError::Malformed(format!("bad parameter name '{name}'")));
    }
    Ok(())
}

fn parse_name(msg_id: u8, bytes: &[u8]) -> Result<String, ProtocolError> {
    if bytes.is_empty() || bytes.len() > MAX_PARAM_NAME || !bytes.is_ascii() {
        return Err(ProtocolError::BadLength {
            msg_id,
            len: bytes.len(),
        });
    }
    Ok(String::from_utf8(bytes.to_vec()).expect("ascii"))
}
