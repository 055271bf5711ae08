/// Fixed-step simulated time kept as an integer tick count so that
/// `t = ticks · dt` holds exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimClock {
    rate_hz: u32,
    ticks: u64,
}

impl SimClock {
    pub fn new(rate_hz: u32) -> Self {
        assert!(rate_hz > 0, "clock rate must be positive");
        Self { rate_hz, ticks: 0 }
    }

    pub fn rate_hz(&self) -> u32 {
        self.rate_hz
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz as f64
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn t(&self) -> f64 {
        self.ticks as f64 / self.rate_hz as f64
    }

    /// Time in whole nanoseconds, rounded down.
    pub fn nanos(&self) -> u64 {
        (self.ticks as u128 * 1_000_000_000 / self.rate_hz as u128) as u64
    }

    pub fn micros(&self) -> u64 {
        (self.ticks as u128 * 1_000_000 / self.rate_hz as u128) as u64
    }

    pub fn advance(&mut self) {
        self.ticks += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_seconds() {
        let mut c = SimClock::new(400);
        for _ in 0..400 {
            c.advance();
        }
        assert_eq!(c.t(), 1.0);
        assert_eq!(c.micros(), 1_000_000);
        assert_eq!(c.dt(), 0.0025);
    }
}
