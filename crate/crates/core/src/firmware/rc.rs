use crate::control_allocation::OverrideState;

/// One frame from the RC receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcChannels {
    /// `[−1, 1]`
    pub roll: f64,
    /// `[−1, 1]`
    pub pitch: f64,
    /// `[−1, 1]`
    pub yaw: f64,
    /// `[0, 1]`
    pub throttle: f64,
    pub attitude_override: bool,
    pub throttle_override: bool,
    pub arm: bool,
    /// Receiver reports a live link.
    pub valid: bool,
}

impl Default for RcChannels {
    fn default() -> Self {
        Self {
            roll: 0.0,
            pitch: 0.0,
            yaw: 0.0,
            throttle: 0.0,
            attitude_override: false,
            throttle_override: false,
            arm: false,
            valid: true,
        }
    }
}

impl RcChannels {
    pub fn lost() -> Self {
        Self {
            valid: false,
            ..Self::default()
        }
    }

    /// Sticks clamped into range; non-finite values become neutral.
    pub fn sanitized(&self) -> Self {
        let c = |v: f64, lo: f64, hi: f64| if v.is_finite() { v.clamp(lo, hi) } else { lo.max(0.0) };
        Self {
            roll: c(self.roll, -1.0, 1.0),
            pitch: c(self.pitch, -1.0, 1.0),
            yaw: c(self.yaw, -1.0, 1.0),
            throttle: c(self.throttle, 0.0, 1.0),
            ..*self
        }
    }

    pub fn max_stick_deflection(&self) -> f64 {
        self.roll.abs().max(self.pitch.abs()).max(self.yaw.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverrideConfig {
    /// Stick deflection that counts as the pilot taking attitude control.
    pub deadband: f64,
    /// Offboard commands older than this (s) are stale.
    pub offboard_timeout: f64,
}

impl Default for OverrideConfig {
    fn default() -> Self {
        Self {
            deadband: 0.05,
            offboard_timeout: 0.1,
        }
    }
}

/// Decides which inputs the RC pilot owns this tick.
pub fn resolve_overrides(
    rc: &RcChannels,
    offboard_age: f64,
    armed: bool,
    cfg: &OverrideConfig,
) -> OverrideState {
    let (att, thr) = if rc.valid {
        (
            rc.attitude_override || rc.max_stick_deflection() > cfg.deadband,
            rc.throttle_override,
        )
    } else {
        (false, false)
    };
    OverrideState {
        attitude_override: att,
        throttle_override: thr,
        offboard_active: armed && offboard_age <= cfg.offboard_timeout,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn switches() {
        let rc = RcChannels {
            attitude_override: true,
            throttle_override: true,
            ..Default::default()
        };
        let ov = resolve_overrides(&rc, 0.0, true, &OverrideConfig::default());
        assert!(ov.attitude_override && ov.throttle_override && ov.offboard_active);
    }

    #[test]
    fn stick_deflection_takes_attitude() {
        let cfg = OverrideConfig::default();
        let rc = RcChannels {
            roll: 0.8,
            ..Default::default()
        };
        let ov = resolve_overrides(&rc, 0.0, true, &cfg);
        assert!(ov.attitude_override);
        assert!(!ov.throttle_override);
        let inside = RcChannels {
            yaw: -0.05,
            ..Default::default()
        };
        assert!(!resolve_overrides(&inside, 0.0, true, &cfg).attitude_override);
        let outside = RcChannels {
            yaw: -0.050_001,
            ..Default::default()
        };
        assert!(resolve_overrides(&outside, 0.0, true, &cfg).attitude_override);
    }

    #[test]
    fn no_companion() {
        let cfg = OverrideConfig::default();
        let ov = resolve_overrides(&RcChannels::default(), f64::INFINITY, true, &cfg);
        assert!(!ov.offboard_active);
        assert!(!resolve_overrides(&RcChannels::default(), 0.0, false, &cfg).offboard_active);
        assert!(resolve_overrides(&RcChannels::default(), 0.1, true, &cfg).offboard_active);
        assert!(!resolve_overrides(&RcChannels::default(), 0.100_001, true, &cfg).offboard_active);
    }

    #[test]
    fn sanitize() {
        let rc = RcChannels {
            roll: 3.0,
            pitch: f64::NAN,
            throttle: -1.0,
            ..Default::default()
        }
        .sanitized();
        assert_eq!((rc.roll, rc.pitch, rc.throttle), (1.0, 0.0, 0.0));
    }
}
