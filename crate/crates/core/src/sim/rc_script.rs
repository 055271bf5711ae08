//! Scripted RC safety pilot: sticks interpolate linearly between keyframes,
//! switches change at scheduled times.

use serde::{Deserialize, Serialize};

use crate::firmware::RcChannels;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StickKeyframe {
    pub t: f64,
    #[serde(default)]
    pub roll: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub yaw: f64,
    #[serde(default)]
    pub throttle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Switch {
    Arm,
    AttitudeOverride,
    ThrottleOverride,
    /// Receiver link; starts on.
    Link,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchEvent {
    pub t: f64,
    pub switch: Switch,
    pub on: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RcScript {
    pub sticks: Vec<StickKeyframe>,
    pub switches: Vec<SwitchEvent>,
}

fn lerp(a: f64, b: f64, s: f64) -> f64 {
    a + (b - a) * s
}

impl RcScript {
    pub fn validate(&self) -> Result<(), String> {
        let times = self.sticks.iter().map(|k| k.t).chain(self.switches.iter().map(|e| e.t));
        if times.clone().any(|t| !t.is_finite() || t < 0.0) {
            return Err("rc script times must be finite and non-negative".into());
        }
        if self.sticks.windows(2).any(|w| w[1].t < w[0].t) {
            return Err("rc stick keyframes must be in time order".into());
        }
        for k in &self.sticks {
            let sticks = [k.roll, k.pitch, k.yaw];
            if sticks.iter().any(|v| !(-1.0..=1.0).contains(v)) || !(0.0..=1.0).contains(&k.throttle) {
                return Err(format!("rc keyframe at t={} out of range", k.t));
            }
        }
        Ok(())
    }

    /// Channel values at `t`. Before the first keyframe the first one holds;
    /// after the last, the last one holds.
    pub fn sample(&self, t: f64) -> RcChannels {
        let mut rc = RcChannels::default();
        if let Some(first) = self.sticks.first() {
            let k = match self.sticks.iter().position(|k| k.t > t) {
                None => *self.sticks.last().unwrap(),
                Some(0) => *first,
                Some(i) => {
                    let (a, b) = (self.sticks[i - 1], self.sticks[i]);
                    let span = b.t - a.t;
                    let s = if span > 0.0 { (t - a.t) / span } else { 1.0 };
                    StickKeyframe {
                        t,
                        roll: lerp(a.roll, b.roll, s),
                        pitch: lerp(a.pitch, b.pitch, s),
                        yaw: lerp(a.yaw, b.yaw, s),
                        throttle: lerp(a.throttle, b.throttle, s),
                    }
                }
            };
            rc.roll = k.roll;
            rc.pitch = k.pitch;
            rc.yaw = k.yaw;
            rc.throttle = k.throttle;
        }
        // Events are applied in time order; ties keep file order.
        let mut events: Vec<&SwitchEvent> = self.switches.iter().filter(|e| e.t <= t).collect();
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        for e in events {
            match e.switch {
                Switch::Arm => rc.arm = e.on,
                Switch::AttitudeOverride => rc.attitude_override = e.on,
                Switch::ThrottleOverride => rc.throttle_override = e.on,
                Switch::Link => rc.valid = e.on,
            }
        }
        rc
    }
}
