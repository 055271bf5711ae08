//! Companion-computer side: reference programs, an offboard controller, and
//! the RTT benchmark. The companion talks to the firmware only through a
//! [`Transport`].

pub mod bench;
pub mod controller;
pub mod program;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use bench::{run_rtt_benchmark, BenchConfig, BenchError, BenchMode, BenchReport, TransportKind};
pub use controller::{CompanionController, CompanionGains, Feedback};
pub use program::{AttitudeTarget, OffboardProgram, ScriptPoint};

use crate::firmware::estimator::ComplementaryFilter;
use crate::firmware::ImuSample;
use crate::serial::{FrameWriter, Message, OffboardCommand, StreamDecoder, Transport, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CommandMode {
    /// Forces and torques straight to the mixer.
    #[default]
    Passthrough,
    /// Attitude setpoints for the firmware's own controller.
    Setpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompanionConfig {
    pub program: OffboardProgram,
    #[serde(default)]
    pub mode: CommandMode,
    /// Close the loop on an estimate built from streamed IMU messages
    /// instead of truth attitude.
    #[serde(default)]
    pub use_estimate: bool,
    #[serde(default = "default_alpha")]
    pub estimator_alpha: f64,
    /// Collective sent in setpoint mode.
    #[serde(default)]
    pub setpoint_thrust: f64,
    #[serde(default)]
    pub gains: CompanionGains,
}

fn default_alpha() -> f64 {
    0.02
}

impl CompanionConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.program.validate()?;
        self.gains.validate()?;
        if !self.setpoint_thrust.is_finite() || !(0.0..=1.0).contains(&self.estimator_alpha) {
            return Err("companion setpoint_thrust must be finite and estimator_alpha in [0, 1]".into());
        }
        Ok(())
    }
}

/// Counters of traffic seen by the companion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CompanionStats {
    pub commands_sent: u64,
    pub heartbeats: u64,
    pub imu_samples: u64,
    pub echo_replies: u64,
}

pub struct Companion<T: Transport> {
    transport: T,
    config: CompanionConfig,
    decoder: StreamDecoder,
    writer: FrameWriter,
    controller: CompanionController,
    filter: ComplementaryFilter,
    last_imu: Option<ImuSample>,
    last_target: AttitudeTarget,
    stats: CompanionStats,
    rx: Vec<u8>,
}

impl<T: Transport> Companion<T> {
    pub fn new(transport: T, config: CompanionConfig) -> Self {
        let filter = ComplementaryFilter::new(config.estimator_alpha, config.gains.g);
        Self {
            transport,
            config,
            decoder: StreamDecoder::new(),
            writer: FrameWriter::new(),
            controller: CompanionController::new(),
            filter,
            last_imu: None,
            last_target: AttitudeTarget::default(),
            stats: CompanionStats::default(),
            rx: Vec::new(),
        }
    }

    pub fn config(&self) -> &CompanionConfig {
        &self.config
    }

    pub fn stats(&self) -> CompanionStats {
        self.stats
    }

    pub fn last_target(&self) -> AttitudeTarget {
        self.last_target
    }

    pub fn controller_mut(&mut self) -> &mut CompanionController {
        &mut self.controller
    }

    /// Seeds the onboard estimate, e.g. from a known initial attitude.
    pub fn reset_estimate(&mut self, q: nalgebra::UnitQuaternion<f64>) {
        self.filter.reset(q);
    }

    fn drain_incoming(&mut self) -> Result<(), TransportError> {
        self.rx.clear();
        self.transport.poll(&mut self.rx)?;
        for d in self.decoder.push(&self.rx) {
            match d.msg {
                Message::Heartbeat => self.stats.heartbeats += 1,
                Message::EchoReply(_) => self.stats.echo_replies += 1,
                Message::Imu(data) => {
                    self.stats.imu_samples += 1;
                    let sample = ImuSample {
                        accel: Vector3::from(data.accel.map(f64::from)),
                        gyro: Vector3::from(data.gyro.map(f64::from)),
                        t: data.t_us as f64 * 1e-6,
                    };
                    if let Some(prev) = self.last_imu {
                        let dt = sample.t - prev.t;
                        if dt > 0.0 {
                            self.filter.update(&sample, dt);
                        }
                    }
                    self.last_imu = Some(sample);
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// One companion step at time `t`: read the link, compute, send one
    /// offboard command. `truth` supplies position and velocity, and
    /// attitude too unless the estimate is in use.
    pub fn step(&mut self, t: f64, dt: f64, truth: &Feedback) -> Result<OffboardCommand, TransportError> {
        self.drain_incoming()?;
        let target = self.config.program.target(t);
        self.last_target = target;

        let cmd = match self.config.mode {
            CommandMode::Passthrough => {
                let mut fb = *truth;
                if self.config.use_estimate {
                    fb.q = self.filter.attitude();
                    fb.w = self.last_imu.map(|s| s.gyro).unwrap_or_else(Vector3::zeros);
                }
                let ff = self.config.program.target_rate(t);
                let u = self.controller.step(&fb, &target, ff, &self.config.gains, dt);
                OffboardCommand::passthrough(u.as_array().map(|v| v as f32))
            }
            CommandMode::Setpoint => OffboardCommand::setpoint(
                [target.roll, target.pitch, target.yaw_rate, self.config.setpoint_thrust, 0.0, 0.0]
                    .map(|v| v as f32),
            ),
        };
        let (_, frame) = self
            .writer
            .frame(&Message::Offboard(cmd))
            .expect("offboard commands always fit in a frame");
        self.transport.send(&frame)?;
        self.stats.commands_sent += 1;
        Ok(cmd)
    }

    /// Sends an arbitrary message, e.g. a parameter write.
    pub fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        let (_, frame) = self.writer.frame(msg).map_err(|e| {
            TransportError::Io(std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()))
        })?;
        self.transport.send(&frame)
    }
}
