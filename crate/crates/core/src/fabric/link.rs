use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::SimError;

/// One-way fiber propagation delay.
pub const FIBER_NS_PER_KM: f64 = 5_000.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub rate_bps: u64,
    pub prop_delay: SimTime,
    pub mtu: u32,
}

impl LinkConfig {
    pub fn new(rate_bps: u64, prop_delay: SimTime, mtu: u32) -> Result<Self, SimError> {
        if rate_bps == 0 {
            return Err(SimError::config("link rate must be positive"));
        }
        if mtu == 0 {
            return Err(SimError::config("link mtu must be positive"));
        }
        Ok(Self {
            rate_bps,
            prop_delay,
            mtu,
        })
    }

    /// Serialization delay of `bytes` in (fractional) nanoseconds.
    pub fn serialization_ns(&self, bytes: u32) -> f64 {
        bytes as f64 * 8.0 * 1e9 / self.rate_bps as f64
    }

    /// Serialization delay in picoseconds, rounded down.
    pub fn serialization_ps(&self, bytes: u32) -> u64 {
        ((bytes as u128 * 8 * 1_000_000_000_000) / self.rate_bps as u128) as u64
    }
}

pub fn long_haul_delay(distance_km: f64) -> SimTime {
    SimTime::from_nanos((distance_km * FIBER_NS_PER_KM).round() as u64)
}

/// Integer-nanosecond transmitter that carries the sub-nanosecond remainder
/// forward, so the long-run rate is exact even though the clock is in ns.
#[derive(Clone, Copy, Debug, Default)]
pub struct Serializer {
    residue_ps: u64,
}

impl Serializer {
    pub fn duration(&mut self, cfg: &LinkConfig, bytes: u32) -> SimTime {
        let total = self.residue_ps + cfg.serialization_ps(bytes);
        self.residue_ps = total % 1_000;
        SimTime::from_nanos(total / 1_000)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serialization_of_4096_bytes_at_100g() {
        let l = LinkConfig::new(100_000_000_000, SimTime::ZERO, 4096).unwrap();
        let expected = 4096.0 * 8.0 / 100e9 * 1e9;
        assert!((l.serialization_ns(4096) - expected).abs() < 1e-9);
        assert!((l.serialization_ns(4096) - 327.68).abs() < 1e-9);
    }

    #[test]
    fn serializer_keeps_long_run_rate_exact() {
        let l = LinkConfig::new(100_000_000_000, SimTime::ZERO, 4096).unwrap();
        let mut s = Serializer::default();
        let total: u64 = (0..1000).map(|_| s.duration(&l, 4096).as_nanos()).sum();
        assert_eq!(total, 327_680);
    }

    #[test]
    fn long_haul_endpoints() {
        assert_eq!(long_haul_delay(1000.0), SimTime::from_millis(5));
        assert_eq!(long_haul_delay(1.0), SimTime::from_micros(5));
        assert_eq!(long_haul_delay(100.0), SimTime::from_micros(500));
    }

    #[test]
    fn zero_rate_is_rejected() {
        assert!(LinkConfig::new(0, SimTime::ZERO, 4096).is_err());
    }
}
