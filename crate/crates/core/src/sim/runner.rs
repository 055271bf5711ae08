//! Lockstep scheduler. Each tick runs, in order: RC, companion (at its
//! divider), serial delivery and firmware, forces and moments, dynamics,
//! sensors, logger.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Duration;

use nalgebra::Vector3;

use super::board::SilBoard;
use super::clock::SimClock;
use super::dynamics::{rk4_step, RigidBody, RigidBodyState, Wrench};
use super::forces::{ForcesAndMoments, MotorForces};
use super::scenario::{ScenarioConfig, ScenarioError};
use super::sensors::Sensors;
use crate::companion::{AttitudeTarget, Companion, Feedback};
use crate::control_allocation::{mixer_from_motors, write_custom_params, MixerSlot, NUM_INPUTS, NUM_OUTPUTS};
use crate::firmware::{names, AttitudeEstimate, Firmware, FirmwareConfig, MixerSelection, ParamStore, ParamValue};
use crate::motor_model::Environment;
use crate::serial::{inproc_pair, Clock, InprocEndpoint, LinkDelay, ManualClock};

/// One logged sample, taken at the end of a tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub state: RigidBodyState,
    /// Channel outputs applied during the tick.
    pub outputs: [f64; NUM_OUTPUTS],
    /// Input vector the firmware mixed during the tick.
    pub u: [f64; NUM_INPUTS],
    /// Attitude reference at `t`, if a companion program is running.
    pub target: Option<AttitudeTarget>,
}

pub const CSV_HEADER: &str = "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,wx,wy,wz,\
d0,d1,d2,d3,d4,d5,d6,d7,d8,d9,u0,u1,u2,u3,u4,u5";

impl LogRow {
    fn write_csv(&self, out: &mut String) {
        let s = &self.state;
        let q = s.q.quaternion();
        let mut vals: Vec<f64> = vec![self.t];
        vals.extend(s.p.iter());
        vals.extend(s.v.iter());
        vals.extend([q.w, q.i, q.j, q.k]);
        vals.extend(s.w.iter());
        vals.extend(self.outputs);
        vals.extend(self.u);
        for (i, v) in vals.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tracking {
    /// Roll tracking error statistics (rad).
    pub rms: f64,
    pub max_abs: f64,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub name: String,
    pub seed: u64,
    pub rows: Vec<LogRow>,
    pub events: Vec<String>,
    pub ticks: u64,
    pub duration: f64,
    pub commands_sent: u64,
    pub command_rate_hz: f64,
    pub tracking: Option<Tracking>,
    pub max_quat_norm_error: f64,
    pub non_finite: bool,
    pub link_error: bool,
}

impl ScenarioResult {
    pub fn csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 300);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            r.write_csv(&mut out);
        }
        out
    }

    pub fn events_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(e);
            out.push('\n');
        }
        out
    }

    /// Invariants the run broke; empty when healthy.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.non_finite {
            v.push("non-finite state or output".to_string());
        }
        if self.max_quat_norm_error > 1e-9 {
            v.push(format!("quaternion norm drifted by {:e}", self.max_quat_norm_error));
        }
        if self.link_error {
            v.push("serial link failed".to_string());
        }
        v
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "scenario {} seed {}: {} ticks, {:.3} s, {} offboard commands ({:.1} Hz)\n",
            self.name, self.seed, self.ticks, self.duration, self.commands_sent, self.command_rate_hz
        );
        if let Some(t) = self.tracking {
            let _ = writeln!(
                s,
                "roll tracking: rms {:.4} deg, max {:.4} deg",
                t.rms.to_degrees(),
                t.max_abs.to_degrees()
            );
        }
        let _ = writeln!(s, "max |‖q‖ − 1|: {:e}", self.max_quat_norm_error);
        s
    }
}

fn toml_to_param(store: &ParamStore, name: &str, v: &toml::Value) -> Result<ParamValue, ScenarioError> {
    let err = |m: String| ScenarioError::Invalid(format!("param {name}: {m}"));
    match v {
        toml::Value::Integer(i) => {
            if store.kind(name).map_err(|e| err(e.to_string()))? == crate::firmware::ParamKind::Real {
                Ok(ParamValue::Real(*i as f64))
            } else {
                Ok(ParamValue::Int(*i))
            }
        }
        toml::Value::Float(f) => Ok(ParamValue::Real(*f)),
        toml::Value::Boolean(b) => Ok(ParamValue::Int(*b as i64)),
        toml::Value::String(s) => store.parse_value(name, s).map_err(|e| err(e.to_string())),
        other => Err(err(format!("unsupported value {other}"))),
    }
}

/// Builds the firmware parameter store a scenario asks for.
pub fn scenario_params(cfg: &ScenarioConfig) -> Result<ParamStore, ScenarioError> {
    let mut store = ParamStore::new();
    let env: Environment = cfg.environment.into();
    let motors = cfg.vehicle.motor_descriptors();
    let invalid = |e: String| ScenarioError::Invalid(e);

    let apply_mixer = |store: &mut ParamStore, which: &str, slot: MixerSlot, value: &str| {
        if value == "general" {
            let mixer = mixer_from_motors("general", &motors, env.rho);
            for (n, v) in write_custom_params(&mixer, slot) {
                store.set(&n, v).map_err(|e| invalid(e.to_string()))?;
            }
            store
                .set(which, ParamValue::Int(MixerSelection::CUSTOM_CODE))
                .map_err(|e| invalid(e.to_string()))
        } else {
            store.set_from_str(which, value).map_err(|e| invalid(e.to_string()))
        }
    };
    if let Some(m) = &cfg.firmware.primary_mixer {
        apply_mixer(&mut store, names::PRIMARY_MIXER, MixerSlot::Primary, m)?;
    }
    if let Some(m) = &cfg.firmware.secondary_mixer {
        apply_mixer(&mut store, names::SECONDARY_MIXER, MixerSlot::Secondary, m)?;
    }
    for (name, v) in &cfg.firmware.params {
        let value = toml_to_param(&store, name, v)?;
        store
            .set(name, value)
            .map_err(|e| ScenarioError::Invalid(format!("param {name}: {e}")))?;
    }
    Ok(store)
}

pub struct Simulation {
    cfg: ScenarioConfig,
    clock: SimClock,
    link_clock: Arc<ManualClock>,
    body: RigidBody,
    env: Environment,
    state: RigidBodyState,
    forces: Box<dyn ForcesAndMoments>,
    sensors: Sensors,
    firmware: Firmware,
    board: SilBoard,
    companion: Option<Companion<InprocEndpoint>>,
    divider: u64,
    total_ticks: u64,
    rows: Vec<LogRow>,
    events: Vec<String>,
    max_quat_norm_error: f64,
    non_finite: bool,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, ScenarioError> {
        cfg.validate()?;
        let env: Environment = cfg.environment.into();
        let body = RigidBody::new(cfg.vehicle.mass, cfg.vehicle.inertia_matrix()).map_err(ScenarioError::Invalid)?;
        let motors = cfg.vehicle.motor_descriptors();

        let params = scenario_params(&cfg)?;
        let fw_cfg = FirmwareConfig {
            motors: motors.clone(),
            env,
            nominal_dt: 1.0 / cfg.dynamics_hz as f64,
        };
        let mut firmware = Firmware::new(params, fw_cfg).map_err(|e| ScenarioError::Invalid(e.to_string()))?;

        let state = RigidBodyState {
            p: Vector3::from(cfg.initial.position),
            v: cfg.initial_velocity(),
            q: cfg.initial.attitude_quaternion(),
            w: Vector3::from(cfg.initial.rates),
        };
        firmware.reset_estimator(state.q);

        let link_clock = Arc::new(ManualClock::new());
        let shared: Arc<dyn Clock> = link_clock.clone();
        let one_way = LinkDelay {
            fixed: Duration::from_secs_f64(cfg.link.delay_ms * 1e-3),
            jitter: Duration::from_secs_f64(cfg.link.jitter_ms * 1e-3),
            seed: cfg.seed,
        };
        let back = LinkDelay {
            seed: cfg.seed.wrapping_add(1),
            ..one_way
        };
        let (companion_end, firmware_end) = inproc_pair(shared, one_way, back);

        let mut sensors = Sensors::new(cfg.sensors, cfg.seed);
        let imu = sensors.imu(&state, &Wrench::default(), body.mass, 0.0);
        let clock = SimClock::new(cfg.dynamics_hz);
        let board = SilBoard::new(clock, link_clock.clone(), firmware_end, imu);

        let companion = cfg.companion.clone().map(|c| {
            let mut comp = Companion::new(companion_end, c);
            comp.reset_estimate(state.q);
            comp
        });

        let forces = Box::new(MotorForces::new(motors, env, cfg.vehicle.drag, cfg.vehicle.motor_lag));
        let total_ticks = (cfg.duration * cfg.dynamics_hz as f64).round() as u64;
        let divider = cfg.offboard_divider() as u64;

        let mut sim = Self {
            cfg,
            clock,
            link_clock,
            body,
            env,
            state,
            forces,
            sensors,
            firmware,
            board,
            companion,
            divider,
            total_ticks,
            rows: Vec::with_capacity(total_ticks as usize + 1),
            events: Vec::new(),
            max_quat_norm_error: 0.0,
            non_finite: false,
        };
        sim.collect_events();
        let initial = LogRow {
            t: 0.0,
            state: sim.state,
            outputs: [0.0; NUM_OUTPUTS],
            u: [0.0; NUM_INPUTS],
            target: sim.target_at(0.0),
        };
        sim.rows.push(initial);
        Ok(sim)
    }

    /// Swaps the forces-and-moments module.
    pub fn with_forces(mut self, forces: Box<dyn ForcesAndMoments>) -> Self {
        self.forces = forces;
        self
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn state(&self) -> &RigidBodyState {
        &self.state
    }

    pub fn body(&self) -> &RigidBody {
        &self.body
    }

    pub fn firmware(&self) -> &Firmware {
        &self.firmware
    }

    pub fn board_micros(&self) -> u64 {
        use crate::firmware::Board;
        self.board.clock_micros()
    }

    pub fn total_ticks(&self) -> u64 {
        self.total_ticks
    }

    pub fn is_done(&self) -> bool {
        self.clock.ticks() >= self.total_ticks
    }

    fn target_at(&self, t: f64) -> Option<AttitudeTarget> {
        self.cfg.companion.as_ref().map(|c| c.program.target(t))
    }

    fn collect_events(&mut self) {
        for e in self.firmware.drain_events() {
            self.events.push(e.to_string());
        }
    }

    pub fn step(&mut self) {
        let t = self.clock.t();
        let dt = self.clock.dt();
        self.board.sync_clock(self.clock);

        // RC
        self.board.rc = self.cfg.rc.sample(t);

        // Companion
        if let Some(comp) = self.companion.as_mut() {
            if self.clock.ticks().is_multiple_of(self.divider) {
                let fb = Feedback {
                    q: self.state.q,
                    w: self.state.w,
                    p: self.state.p,
                    v: self.state.velocity_ned(),
                };
                let comp_dt = dt * self.divider as f64;
                if comp.step(t, comp_dt, &fb).is_err() {
                    self.board.link_error = true;
                }
            }
        }

        // Serial delivery and firmware
        if self.cfg.firmware.truth_attitude {
            self.firmware.inject_attitude(Some(AttitudeEstimate {
                q: self.state.q,
                rate: self.state.w,
            }));
        }
        let outputs = self.firmware.run_cycle(&mut self.board);
        self.collect_events();

        // Forces, dynamics, sensors
        let wrench = self.forces.compute(&outputs, &self.state, dt);
        self.state = rk4_step(&self.state, &wrench, &self.body, self.env.g, dt);
        self.clock.advance();
        let t_next = self.clock.t();
        self.board.imu = self.sensors.imu(&self.state, &wrench, self.body.mass, t_next);

        // Logger
        let norm_err = (self.state.q.quaternion().norm() - 1.0).abs();
        self.max_quat_norm_error = self.max_quat_norm_error.max(norm_err);
        if !self.state.is_finite() || !wrench.is_finite() || outputs.iter().any(|v| !v.is_finite()) {
            self.non_finite = true;
        }
        let row = LogRow {
            t: t_next,
            state: self.state,
            outputs,
            u: self.firmware.telemetry().u,
            target: self.target_at(t_next),
        };
        self.rows.push(row);
    }

    pub fn run(mut self) -> ScenarioResult {
        while !self.is_done() {
            self.step();
        }
        self.finish()
    }

    pub fn finish(self) -> ScenarioResult {
        let duration = self.clock.t();
        let tracking = if self.cfg.companion.is_some() {
            let errs: Vec<f64> = self
                .rows
                .iter()
                .filter_map(|r| r.target.map(|tg| r.state.euler().0 - tg.roll))
                .collect();
            let n = errs.len();
            let rms = (errs.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
            let max_abs = errs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
            Some(Tracking {
                rms,
                max_abs,
                samples: n,
            })
        } else {
            None
        };
        let commands_sent = self.companion.as_ref().map(|c| c.stats().commands_sent).unwrap_or(0);
        let _ = &self.link_clock;
        ScenarioResult {
            name: self.cfg.name.clone(),
            seed: self.cfg.seed,
            ticks: self.clock.ticks(),
            duration,
            commands_sent,
            command_rate_hz: if duration > 0.0 { commands_sent as f64 / duration } else { 0.0 },
            tracking,
            max_quat_norm_error: self.max_quat_norm_error,
            non_finite: self.non_finite,
            link_error: self.board.link_error,
            rows: self.rows,
            events: self.events,
        }
    }
}

/// Parses, builds and runs a scenario, optionally overriding its seed.
pub fn run_scenario(text: &str, seed: Option<u64>) -> Result<ScenarioResult, ScenarioError> {
    let mut cfg = ScenarioConfig::from_toml(text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(Simulation::new(cfg)?.run())
}
