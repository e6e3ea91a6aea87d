use crate::engine::SimTime;

/// Admission gate at the source OTN. An infinite fill rate disables it.
#[derive(Clone, Debug)]
pub struct TokenBucket {
    fill_rate: f64,
    burst_bits: f64,
    tokens: f64,
    last_refill: SimTime,
}

impl TokenBucket {
    /// Starts full.
    pub fn new(fill_rate_bps: f64, burst_bytes: u64) -> Self {
        let burst_bits = burst_bytes as f64 * 8.0;
        Self {
            fill_rate: fill_rate_bps,
            burst_bits,
            tokens: burst_bits,
            last_refill: SimTime::ZERO,
        }
    }

    pub fn unlimited() -> Self {
        Self::new(f64::INFINITY, 0)
    }

    pub fn is_unlimited(&self) -> bool {
        self.fill_rate.is_infinite()
    }

    pub fn fill_rate(&self) -> f64 {
        self.fill_rate
    }

    pub fn tokens(&self) -> f64 {
        self.tokens
    }

    pub fn burst_bits(&self) -> f64 {
        self.burst_bits
    }

    pub fn refill(&mut self, now: SimTime) {
        if now <= self.last_refill {
            return;
        }
        let dt = (now - self.last_refill).as_nanos() as f64 * 1e-9;
        if !self.is_unlimited() {
            self.tokens = (self.tokens + self.fill_rate * dt).min(self.burst_bits);
        }
        self.last_refill = now;
    }

    /// Changes the fill rate, crediting tokens earned at the old rate first.
    pub fn set_rate(&mut self, rate_bps: f64, now: SimTime) {
        self.refill(now);
        self.fill_rate = rate_bps;
    }

    pub fn try_consume(&mut self, bytes: u32, now: SimTime) -> bool {
        if self.is_unlimited() {
            return true;
        }
        self.refill(now);
        let need = bytes as f64 * 8.0;
        if self.tokens + 1e-6 >= need {
            self.tokens = (self.tokens - need).max(0.0);
            true
        } else {
            false
        }
    }

    /// Earliest time a packet of `bytes` fits, or `None` if it never will.
    pub fn ready_at(&mut self, bytes: u32, now: SimTime) -> Option<SimTime> {
        if self.is_unlimited() {
            return Some(now);
        }
        self.refill(now);
        let need = bytes as f64 * 8.0;
        if self.tokens + 1e-6 >= need {
            return Some(now);
        }
        if self.fill_rate <= 0.0 || need > self.burst_bits + 1e-6 {
            return None;
        }
        let wait_ns = ((need - self.tokens) / self.fill_rate * 1e9).ceil() as u64;
        Some(now + SimTime::from_nanos(wait_ns.max(1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gated_forwarding_matches_fill_rate() {
        let pkt = 4144u32;
        let mut b = TokenBucket::new(40e9, pkt as u64);
        // Offered at 100 Gbps for 1 ms; the gate retries at its ready time.
        let gap = pkt as f64 * 8.0 / 100e9 * 1e9;
        let horizon = SimTime::from_millis(1);
        let mut forwarded = 0u64;
        let mut backlog = 0u64;
        let mut next_arrival = 0.0f64;
        let mut retry: Option<SimTime> = None;
        loop {
            let arrival = SimTime::from_nanos(next_arrival as u64);
            let now = match retry {
                Some(r) if r < arrival => r,
                _ => arrival,
            };
            if now >= horizon {
                break;
            }
            if now == arrival {
                backlog += 1;
                next_arrival += gap;
            }
            while backlog > 0 && b.try_consume(pkt, now) {
                backlog -= 1;
                forwarded += pkt as u64;
            }
            retry = if backlog > 0 { b.ready_at(pkt, now) } else { None };
        }
        let oracle = 40e9 * 1e-3 / 8.0;
        assert!((forwarded as f64 - oracle).abs() <= pkt as f64, "{forwarded} vs {oracle}");
    }

    #[test]
    fn tokens_capped_at_burst() {
        let mut b = TokenBucket::new(10e9, 1000);
        b.refill(SimTime::from_millis(10));
        assert_eq!(b.tokens(), 8000.0);
        assert!(b.try_consume(1000, SimTime::from_millis(10)));
        assert!(!b.try_consume(1, SimTime::from_millis(10)));
    }

    #[test]
    fn ready_at_waits_for_refill() {
        let mut b = TokenBucket::new(8e9, 1000);
        assert!(b.try_consume(1000, SimTime::ZERO));
        // 1000 bytes at 8 Gbps = 1 us.
        assert_eq!(b.ready_at(1000, SimTime::ZERO), Some(SimTime::from_micros(1)));
        b.set_rate(0.0, SimTime::ZERO);
        assert_eq!(b.ready_at(1000, SimTime::ZERO), None);
    }

    #[test]
    fn unlimited_always_passes() {
        let mut b = TokenBucket::unlimited();
        assert!((0..1000).all(|_| b.try_consume(4144, SimTime::ZERO)));
    }
}
