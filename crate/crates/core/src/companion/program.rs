//! Attitude reference generators run by the companion.

use serde::{Deserialize, Serialize};

/// Roll and pitch (rad) plus yaw rate (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttitudeTarget {
    pub roll: f64,
    pub pitch: f64,
    pub yaw_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptPoint {
    pub t: f64,
    #[serde(default)]
    pub roll: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub yaw_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OffboardProgram {
    /// Symmetric triangle wave in roll starting at zero and rising.
    TriangleRoll { amplitude: f64, period: f64 },
    /// Roll jumps from zero to `amplitude` at `at`.
    StepAttitude { amplitude: f64, at: f64 },
    Hover,
    /// Piecewise-linear keyframes; holds the ends.
    Scripted { points: Vec<ScriptPoint> },
}

impl OffboardProgram {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            OffboardProgram::TriangleRoll { amplitude, period } => {
                if !amplitude.is_finite() || !(period.is_finite() && *period > 0.0) {
                    return Err("triangle_roll needs a finite amplitude and positive period".into());
                }
            }
            OffboardProgram::StepAttitude { amplitude, at } => {
                if !amplitude.is_finite() || !at.is_finite() {
                    return Err("step_attitude needs finite amplitude and time".into());
                }
            }
            OffboardProgram::Hover => {}
            OffboardProgram::Scripted { points } => {
                if points.is_empty() {
                    return Err("scripted program needs at least one point".into());
                }
                if points.windows(2).any(|w| w[1].t < w[0].t) {
                    return Err("scripted points must be in time order".into());
                }
                let finite = points
                    .iter()
                    .all(|p| [p.t, p.roll, p.pitch, p.yaw_rate].iter().all(|v| v.is_finite()));
                if !finite {
                    return Err("scripted points must be finite".into());
                }
            }
        }
        Ok(())
    }

    pub fn target(&self, t: f64) -> AttitudeTarget {
        match self {
            OffboardProgram::TriangleRoll { amplitude, period } => {
                let s = (t / period).rem_euclid(1.0);
                let roll = if s < 0.25 {
                    4.0 * s
                } else if s < 0.75 {
                    2.0 - 4.0 * s
                } else {
                    4.0 * s - 4.0
                };
                AttitudeTarget {
                    roll: amplitude * roll,
                    ..Default::default()
                }
            }
            OffboardProgram::StepAttitude { amplitude, at } => AttitudeTarget {
                roll: if t >= *at { *amplitude } else { 0.0 },
                ..Default::default()
            },
            OffboardProgram::Hover => AttitudeTarget::default(),
            OffboardProgram::Scripted { points } => {
                let (a, b) = match points.iter().position(|p| p.t > t) {
                    None => {
                        let p = points[points.len() - 1];
                        (p, p)
                    }
                    Some(0) => (points[0], points[0]),
                    Some(i) => (points[i - 1], points[i]),
                };
                let span = b.t - a.t;
                let s = if span > 0.0 { (t - a.t) / span } else { 0.0 };
                AttitudeTarget {
                    roll: a.roll + (b.roll - a.roll) * s,
                    pitch: a.pitch + (b.pitch - a.pitch) * s,
                    yaw_rate: a.yaw_rate + (b.yaw_rate - a.yaw_rate) * s,
                }
            }
        }
    }

    /// Time derivative of the roll and pitch targets, used as rate feedforward.
    pub fn target_rate(&self, t: f64) -> (f64, f64) {
        match self {
            OffboardProgram::TriangleRoll { amplitude, period } => {
                let s = (t / period).rem_euclid(1.0);
                let slope = 4.0 * amplitude / period;
                (if (0.25..0.75).contains(&s) { -slope } else { slope }, 0.0)
            }
            OffboardProgram::Scripted { points } => match points.iter().position(|p| p.t > t) {
                Some(i) if i > 0 => {
                    let (a, b) = (points[i - 1], points[i]);
                    let span = b.t - a.t;
                    if span > 0.0 {
                        ((b.roll - a.roll) / span, (b.pitch - a.pitch) / span)
                    } else {
                        (0.0, 0.0)
                    }
                }
                _ => (0.0, 0.0),
            },
            _ => (0.0, 0.0),
        }
    }
}
