//! Flight-controller core: arming, RC/offboard muxing, inner loops,
//! parameters, and the per-tick pipeline that ends at the mixer.
//!
//! [`Firmware::tick`] is a pure state-machine step fed by values. The
//! [`Firmware::run_cycle`] wrapper pulls those values from a [`Board`] and
//! services the serial link.

pub mod board;
pub mod controller;
pub mod estimator;
pub mod params;
pub mod rc;

use std::fmt;

use nalgebra::UnitQuaternion;
use thiserror::Error;

pub use board::{Board, ImuSample};
pub use controller::{AttitudeController, AttitudeSetpoint, AxisGains, ControllerGains};
pub use estimator::{AttitudeEstimate, ComplementaryFilter};
pub use params::{names, MixerSelection, ParamError, ParamKind, ParamStore, ParamValue, ParamView};
pub use rc::{resolve_overrides, OverrideConfig, RcChannels};

use crate::control_allocation::{
    blend_mixers, load_custom, output_stage, AllocationError, ControlInput, EffectiveMixer,
    LoadedMixer, MixerConfig, MixerSlot, MixerSource, MotorConversion, OutputKind, OverrideState,
    NUM_INPUTS, NUM_OUTPUTS,
};
use crate::motor_model::{Environment, MotorDescriptor};
use crate::serial::message::{ImuData, OffboardCommand, OffboardMode};
use crate::serial::{encode, AckCode, FrameWriter, Message, StreamDecoder};

#[derive(Debug, Error)]
pub enum FirmwareError {
    #[error("mixer: {0}")]
    Mixer(#[from] AllocationError),
    #[error("parameter: {0}")]
    Param(#[from] ParamError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlSource {
    Rc,
    Offboard,
    Mixed,
}

impl fmt::Display for ControlSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControlSource::Rc => "rc",
            ControlSource::Offboard => "offboard",
            ControlSource::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirmwareState {
    pub armed: bool,
    pub failsafe: bool,
    pub control_source: ControlSource,
    pub offboard_mode: OffboardMode,
    /// Seconds since the last accepted offboard command; infinite before the first.
    pub last_offboard_age: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Armed,
    Disarmed,
    ArmRejected { reason: &'static str },
    FailsafeEntered,
    FailsafeCleared,
    OverrideChanged(OverrideState),
    SourceChanged(ControlSource),
    MixerLoaded { primary: String, secondary: String },
    MixerRejected(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirmwareEvent {
    /// Zero-based index of the tick that raised the event.
    pub tick: u64,
    pub time_us: u64,
    pub kind: EventKind,
}

impl fmt::Display for FirmwareEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tick={} t_us={} ", self.tick, self.time_us)?;
        match &self.kind {
            EventKind::Armed => write!(f, "event=armed"),
            EventKind::Disarmed => write!(f, "event=disarmed"),
            EventKind::ArmRejected { reason } => write!(f, "event=arm_rejected reason={reason}"),
            EventKind::FailsafeEntered => write!(f, "event=failsafe_on"),
            EventKind::FailsafeCleared => write!(f, "event=failsafe_off"),
            EventKind::OverrideChanged(ov) => write!(
                f,
                "event=override att={} thr={} offboard={}",
                ov.attitude_override as u8, ov.throttle_override as u8, ov.offboard_active as u8
            ),
            EventKind::SourceChanged(s) => write!(f, "event=source source={s}"),
            EventKind::MixerLoaded { primary, secondary } => {
                write!(f, "event=mixer primary={primary} secondary={secondary}")
            }
            EventKind::MixerRejected(msg) => write!(f, "event=mixer_rejected error=\"{msg}\""),
        }
    }
}

/// Fixed vehicle description handed to the firmware at start-up.
#[derive(Debug, Clone)]
pub struct FirmwareConfig {
    /// Used when `USE_MOTOR_PARAM` is set.
    pub motors: Vec<MotorDescriptor>,
    pub env: Environment,
    /// Step assumed for the first board cycle.
    pub nominal_dt: f64,
}

impl Default for FirmwareConfig {
    fn default() -> Self {
        Self {
            motors: Vec::new(),
            env: Environment::default(),
            nominal_dt: 1.0 / 400.0,
        }
    }
}

/// What the last tick did.
#[derive(Debug, Clone, PartialEq)]
pub struct Telemetry {
    pub outputs: [f64; NUM_OUTPUTS],
    /// The blended input vector fed to the mixer.
    pub u: [f64; NUM_INPUTS],
    pub sources: [MixerSource; NUM_INPUTS],
    pub overrides: OverrideState,
    pub estimate: AttitudeEstimate,
}

#[derive(Debug, Clone)]
struct Mixers {
    primary: LoadedMixer,
    secondary: LoadedMixer,
    use_motor_param: bool,
}

const HEARTBEAT_PERIOD_US: u64 = 1_000_000;

pub struct Firmware {
    params: ParamStore,
    config: FirmwareConfig,
    mixers: Mixers,
    mixer_revision: u64,
    filter: ComplementaryFilter,
    controller: AttitudeController,
    injected: Option<AttitudeEstimate>,
    state: FirmwareState,
    overrides: OverrideState,
    last_offboard: Option<OffboardCommand>,
    prev_arm_switch: bool,
    external: [f64; NUM_OUTPUTS],
    telemetry: Telemetry,
    tick_count: u64,
    time_us: u64,
    events: Vec<FirmwareEvent>,
    // serial side
    decoder: StreamDecoder,
    writer: FrameWriter,
    rx_buf: Vec<u8>,
    last_cycle_us: Option<u64>,
    next_heartbeat_us: u64,
}

fn load_slot(params: &ParamStore, sel: MixerSelection, slot: MixerSlot) -> Result<LoadedMixer, AllocationError> {
    let config: MixerConfig = match sel {
        MixerSelection::Predefined(m) => m.config(),
        MixerSelection::Custom => load_custom(params, slot)?.0,
    };
    LoadedMixer::load(config)
}

fn load_mixers(params: &ParamStore, config: &FirmwareConfig) -> Result<Mixers, FirmwareError> {
    let primary_sel = params
        .mixer_selection(names::PRIMARY_MIXER)?
        .ok_or_else(|| AllocationError::UnknownMixer("PRIMARY_MIXER must be set".into()))?;
    let primary = load_slot(params, primary_sel, MixerSlot::Primary)?;
    let secondary = match params.mixer_selection(names::SECONDARY_MIXER)? {
        None => primary.clone(),
        Some(sel) => load_slot(params, sel, MixerSlot::Secondary)?,
    };
    let use_motor_param = params.get_int(names::USE_MOTOR_PARAM)? != 0;
    if use_motor_param {
        for (c, ch) in primary.channels().iter().enumerate() {
            if ch.kind == OutputKind::Motor && !config.motors.iter().any(|m| m.channel == c) {
                return Err(AllocationError::Validation(vec![format!(
                    "USE_MOTOR_PARAM set but motor channel {c} has no motor description"
                )])
                .into());
            }
        }
    }
    Ok(Mixers {
        primary,
        secondary,
        use_motor_param,
    })
}

impl Firmware {
    pub fn new(params: ParamStore, config: FirmwareConfig) -> Result<Self, FirmwareError> {
        let mixers = load_mixers(&params, &config)?;
        let alpha = params.get_real(names::EST_ALPHA)?;
        ControllerGains::from_params(&params)?;
        let mixer_revision = params.mixer_revision();
        let filter = ComplementaryFilter::new(alpha, config.env.g);
        let mut fw = Self {
            params,
            config,
            mixers,
            mixer_revision,
            filter,
            controller: AttitudeController::new(),
            injected: None,
            state: FirmwareState {
                armed: false,
                failsafe: false,
                control_source: ControlSource::Rc,
                offboard_mode: OffboardMode::Passthrough,
                last_offboard_age: f64::INFINITY,
            },
            overrides: OverrideState::default(),
            last_offboard: None,
            prev_arm_switch: false,
            external: [0.0; NUM_OUTPUTS],
            telemetry: Telemetry {
                outputs: [0.0; NUM_OUTPUTS],
                u: [0.0; NUM_INPUTS],
                sources: [MixerSource::Primary; NUM_INPUTS],
                overrides: OverrideState::default(),
                estimate: AttitudeEstimate::default(),
            },
            tick_count: 0,
            time_us: 0,
            events: Vec::new(),
            decoder: StreamDecoder::new(),
            writer: FrameWriter::new(),
            rx_buf: Vec::new(),
            last_cycle_us: None,
            next_heartbeat_us: 0,
        };
        fw.log_mixer_loaded();
        Ok(fw)
    }

    pub fn state(&self) -> FirmwareState {
        self.state
    }

    pub fn telemetry(&self) -> &Telemetry {
        &self.telemetry
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn primary_mixer(&self) -> &LoadedMixer {
        &self.mixers.primary
    }

    pub fn secondary_mixer(&self) -> &LoadedMixer {
        &self.mixers.secondary
    }

    pub fn uses_motor_param(&self) -> bool {
        self.mixers.use_motor_param
    }

    pub fn config(&self) -> &FirmwareConfig {
        &self.config
    }

    pub fn tick_count(&self) -> u64 {
        self.tick_count
    }

    pub fn param_get(&self, name: &str) -> Result<ParamValue, ParamError> {
        self.params.get(name)
    }

    /// Mixer-affecting writes take effect on the next tick.
    pub fn param_set(&mut self, name: &str, value: ParamValue) -> Result<(), ParamError> {
        self.params.set(name, value)
    }

    /// Reloads mixers now instead of waiting for the next tick. On error the
    /// previous mixers stay active.
    pub fn reload_mixers(&mut self) -> Result<(), FirmwareError> {
        self.mixer_revision = self.params.mixer_revision();
        match load_mixers(&self.params, &self.config) {
            Ok(m) => {
                self.mixers = m;
                self.log_mixer_loaded();
                Ok(())
            }
            Err(e) => {
                self.log(EventKind::MixerRejected(e.to_string()));
                Err(e)
            }
        }
    }

    /// Test hook: while set, the estimator output is replaced by `est`.
    pub fn inject_attitude(&mut self, est: Option<AttitudeEstimate>) {
        self.injected = est;
    }

    pub fn reset_estimator(&mut self, q: UnitQuaternion<f64>) {
        self.filter.reset(q);
    }

    /// Value carried by a gpio or aux channel.
    pub fn set_external_output(&mut self, channel: usize, value: f64) {
        if channel < NUM_OUTPUTS {
            self.external[channel] = value;
        }
    }

    /// Takes all events logged since the last call.
    pub fn drain_events(&mut self) -> Vec<FirmwareEvent> {
        std::mem::take(&mut self.events)
    }

    fn log(&mut self, kind: EventKind) {
        self.events.push(FirmwareEvent {
            tick: self.tick_count,
            time_us: self.time_us,
            kind,
        });
    }

    fn log_mixer_loaded(&mut self) {
        let kind = EventKind::MixerLoaded {
            primary: self.mixers.primary.name().to_string(),
            secondary: self.mixers.secondary.name().to_string(),
        };
        self.log(kind);
    }

    /// One control step. Never fails: bad inputs put the firmware into
    /// failsafe, which forces safe outputs.
    pub fn tick(
        &mut self,
        dt: f64,
        rc: &RcChannels,
        offboard: Option<&OffboardCommand>,
        imu: &ImuSample,
    ) -> [f64; NUM_OUTPUTS] {
        let dt_ok = dt.is_finite() && dt > 0.0;

        if self.params.mixer_revision() != self.mixer_revision {
            let _ = self.reload_mixers();
        }

        let rc = rc.sanitized();
        let imu_ok = imu.is_finite();

        // Estimator.
        if let Ok(alpha) = self.params.get_real(names::EST_ALPHA) {
            self.filter.alpha = alpha.clamp(0.0, 1.0);
        }
        let estimate = if let Some(inj) = self.injected {
            inj
        } else if imu_ok && dt_ok {
            self.filter.update(imu, dt)
        } else {
            AttitudeEstimate {
                q: self.filter.attitude(),
                rate: self.telemetry.estimate.rate,
            }
        };

        // Offboard freshness.
        match offboard {
            Some(cmd) if cmd.u.iter().all(|v| v.is_finite()) => {
                self.last_offboard = Some(*cmd);
                self.state.offboard_mode = cmd.mode;
                self.state.last_offboard_age = 0.0;
            }
            _ => {
                if dt_ok {
                    self.state.last_offboard_age += dt;
                }
            }
        }

        // Failsafe and arming.
        let failsafe = !rc.valid || !imu_ok || !dt_ok;
        if failsafe != self.state.failsafe {
            self.state.failsafe = failsafe;
            self.log(if failsafe {
                EventKind::FailsafeEntered
            } else {
                EventKind::FailsafeCleared
            });
        }
        let arm_max = self.params.get_real(names::ARM_THR_MAX).unwrap_or(0.05);
        let rising = rc.arm && !self.prev_arm_switch;
        if rc.valid {
            self.prev_arm_switch = rc.arm;
        }
        if self.state.armed {
            if failsafe || !rc.arm {
                self.state.armed = false;
                self.log(EventKind::Disarmed);
            }
        } else if rising {
            if failsafe {
                self.log(EventKind::ArmRejected { reason: "failsafe" });
            } else if rc.throttle >= arm_max {
                self.log(EventKind::ArmRejected { reason: "throttle" });
            } else {
                self.state.armed = true;
                self.log(EventKind::Armed);
            }
        }

        // Overrides.
        let ov_cfg = OverrideConfig {
            deadband: self.params.get_real(names::RC_DEADBAND).unwrap_or(0.05),
            offboard_timeout: self.params.get_real(names::OFFBOARD_TIMEOUT).unwrap_or(0.1),
        };
        let ov = resolve_overrides(&rc, self.state.last_offboard_age, self.state.armed, &ov_cfg);
        if ov != self.overrides {
            self.overrides = ov;
            self.log(EventKind::OverrideChanged(ov));
        }

        // Command selection. Columns that come from the primary mixer take
        // the RC command; the rest take the companion's.
        let gains = ControllerGains::from_params(&self.params).ok().filter(|g| g.is_valid());
        let rc_sp = self.rc_setpoint(&rc);
        let off = if ov.offboard_active { self.last_offboard } else { None };
        let dt_ctrl = if dt_ok { dt } else { 0.0 };
        let any_primary = (0..NUM_INPUTS).any(|i| ov.input_uses_primary(i));

        let u = match (off, gains) {
            (_, None) => ControlInput::zeros(),
            (Some(cmd), Some(g)) if cmd.mode == OffboardMode::Setpoint => {
                let c = cmd.u_f64();
                let rc_parts = match rc_sp {
                    AttitudeSetpoint::Angle {
                        roll,
                        pitch,
                        yaw_rate,
                        thrust,
                    } => (roll, pitch, yaw_rate, thrust),
                    AttitudeSetpoint::Rate { rates, thrust } => (rates.x, rates.y, rates.z, thrust),
                };
                let (roll, pitch, yaw_rate) = if ov.attitude_override {
                    (rc_parts.0, rc_parts.1, rc_parts.2)
                } else {
                    (c[0], c[1], c[2])
                };
                let thrust = if ov.throttle_override { rc_parts.3 } else { c[3] };
                let sp = AttitudeSetpoint::Angle {
                    roll,
                    pitch,
                    yaw_rate,
                    thrust,
                };
                self.controller.update(&estimate, &sp, &g, dt_ctrl)
            }
            (Some(cmd), Some(g)) => {
                // Pass-through: the companion's vector bypasses the controller.
                let c = cmd.u_f64();
                let from_rc = if any_primary {
                    self.controller.update(&estimate, &rc_sp, &g, dt_ctrl).as_array()
                } else {
                    self.controller.reset();
                    [0.0; NUM_INPUTS]
                };
                let mut u = [0.0; NUM_INPUTS];
                for i in 0..NUM_INPUTS {
                    u[i] = if ov.input_uses_primary(i) { from_rc[i] } else { c[i] };
                }
                ControlInput::new(u)
            }
            (None, Some(g)) => self.controller.update(&estimate, &rc_sp, &g, dt_ctrl),
        };
        if !self.state.armed {
            self.controller.reset();
        }

        let effective: EffectiveMixer = blend_mixers(&self.mixers.primary, &self.mixers.secondary, ov);
        let source = if effective.sources.iter().all(|s| *s == MixerSource::Primary) {
            ControlSource::Rc
        } else if effective.sources.iter().all(|s| *s == MixerSource::Secondary) {
            ControlSource::Offboard
        } else {
            ControlSource::Mixed
        };
        if source != self.state.control_source {
            self.state.control_source = source;
            self.log(EventKind::SourceChanged(source));
        }

        let tau = effective.mix(&u);
        let conv = self.mixers.use_motor_param.then_some(MotorConversion {
            motors: &self.config.motors,
            env: &self.config.env,
        });
        let mut outputs = output_stage(&tau, &effective.channels, conv, &self.external);

        // Safety gate.
        if !self.state.armed || self.state.failsafe {
            for (o, ch) in outputs.iter_mut().zip(effective.channels.iter()) {
                match ch.kind {
                    OutputKind::Motor | OutputKind::Servo => *o = 0.0,
                    OutputKind::Gpio | OutputKind::Aux => {}
                }
            }
        }

        self.telemetry = Telemetry {
            outputs,
            u: u.as_array(),
            sources: effective.sources,
            overrides: ov,
            estimate,
        };
        self.tick_count += 1;
        if dt_ok {
            self.time_us = self.time_us.wrapping_add((dt * 1e6).round() as u64);
        }
        outputs
    }

    /// RC sticks in angle mode.
    fn rc_setpoint(&self, rc: &RcChannels) -> AttitudeSetpoint {
        let get = |n: &str, d: f64| self.params.get_real(n).unwrap_or(d);
        let max_angle = get(names::RC_MAX_ANGLE, 0.5);
        AttitudeSetpoint::Angle {
            roll: rc.roll * max_angle,
            pitch: rc.pitch * max_angle,
            yaw_rate: rc.yaw * get(names::RC_MAX_YAW_RATE, 2.0),
            thrust: rc.throttle * get(names::RC_THR_SCALE, 4.0),
        }
    }

    /// One board cycle: read sensors and RC, service the serial link, tick,
    /// write outputs.
    pub fn run_cycle<B: Board + ?Sized>(&mut self, board: &mut B) -> [f64; NUM_OUTPUTS] {
        let now = board.clock_micros();
        let dt = match self.last_cycle_us {
            Some(prev) => now.saturating_sub(prev) as f64 * 1e-6,
            None => self.config.nominal_dt,
        };
        self.last_cycle_us = Some(now);

        let imu = board.read_imu();
        let rc = board.read_rc();

        self.rx_buf.clear();
        board.serial_read(&mut self.rx_buf);
        let rx = std::mem::take(&mut self.rx_buf);
        let decoded = self.decoder.push(&rx);
        self.rx_buf = rx;

        let echo = self.params.get_int(names::SERIAL_ECHO).unwrap_or(0) != 0;
        let mut offboard = None;
        let mut out = Vec::new();
        for d in decoded {
            match d.msg {
                Message::Offboard(cmd) => {
                    if echo {
                        if let Ok(frame) = encode(&Message::EchoReply(cmd.payload().to_vec()), d.seq) {
                            out.extend_from_slice(&frame);
                        }
                    }
                    offboard = Some(cmd);
                }
                Message::EchoRequest(p) => {
                    if let Ok(frame) = encode(&Message::EchoReply(p), d.seq) {
                        out.extend_from_slice(&frame);
                    }
                }
                Message::ParamRequest { name } => {
                    let reply = match self.params.get(&name) {
                        Ok(value) => Message::ParamValue { name, value },
                        Err(_) => Message::Ack {
                            msg_id: crate::serial::message::ids::PARAM_REQUEST,
                            code: AckCode::UnknownParam,
                        },
                    };
                    self.push_frame(&mut out, &reply);
                }
                Message::ParamValue { name, value } => {
                    let code = match self.params.set(&name, value) {
                        Ok(()) => AckCode::Ok,
                        Err(ParamError::Unknown(_)) => AckCode::UnknownParam,
                        Err(ParamError::TypeMismatch { .. }) => AckCode::TypeMismatch,
                        Err(_) => AckCode::Rejected,
                    };
                    let ack = Message::Ack {
                        msg_id: crate::serial::message::ids::PARAM_VALUE,
                        code,
                    };
                    self.push_frame(&mut out, &ack);
                }
                Message::Heartbeat | Message::Imu(_) | Message::EchoReply(_) | Message::Ack { .. } => {}
            }
        }

        let outputs = self.tick(dt, &rc, offboard.as_ref(), &imu);
        board.write_outputs(&outputs);

        if self.params.get_int(names::STRM_IMU).unwrap_or(0) != 0 {
            let data = ImuData {
                t_us: now,
                accel: imu.accel.map(|v| v as f32).into(),
                gyro: imu.gyro.map(|v| v as f32).into(),
            };
            self.push_frame(&mut out, &Message::Imu(data));
        }
        if now >= self.next_heartbeat_us {
            self.push_frame(&mut out, &Message::Heartbeat);
            self.next_heartbeat_us = now + HEARTBEAT_PERIOD_US;
        }
        if !out.is_empty() {
            board.serial_write(&out);
        }
        outputs
    }

    fn push_frame(&mut self, out: &mut Vec<u8>, msg: &Message) {
        if let Ok((_, frame)) = self.writer.frame(msg) {
            out.extend_from_slice(&frame);
        }
    }
}
