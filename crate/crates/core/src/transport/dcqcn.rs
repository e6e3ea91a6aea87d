//! Sender-side DCQCN rate control.

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DcqcnParams {
    pub g: f64,
    pub alpha_timer_ns: u64,
    pub rate_timer_ns: u64,
    pub byte_counter_bytes: u64,
    pub fast_recovery_steps: u32,
    pub rai_bps: f64,
    pub min_rate_bps: f64,
    pub initial_alpha: f64,
}

impl Default for DcqcnParams {
    fn default() -> Self {
        Self {
            g: 1.0 / 16.0,
            alpha_timer_ns: 55_000,
            rate_timer_ns: 55_000,
            byte_counter_bytes: 10 * 1024 * 1024,
            fast_recovery_steps: 5,
            rai_bps: 5e6,
            min_rate_bps: 10e6,
            initial_alpha: 1.0,
        }
    }
}

impl DcqcnParams {
    /// RTT-proportional fairness scaling: larger additive step, smaller gain.
    pub fn scaled_for_rtt(&self, ratio: f64) -> Self {
        let ratio = ratio.max(1.0);
        Self {
            rai_bps: self.rai_bps * ratio,
            g: self.g / ratio,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IncreasePhase {
    FastRecovery,
    Additive,
}

#[derive(Clone, Debug)]
pub struct DcqcnState {
    pub params: DcqcnParams,
    pub line_rate: f64,
    pub current_rate: f64,
    pub target_rate: f64,
    pub alpha: f64,
    pub last_cnp_at: Option<SimTime>,
    increase_events: u32,
    cnp_since_alpha_tick: bool,
    bytes_since_increase: u64,
}

impl DcqcnState {
    pub fn new(params: DcqcnParams, line_rate: f64) -> Self {
        Self {
            params,
            line_rate,
            current_rate: line_rate,
            target_rate: line_rate,
            alpha: params.initial_alpha.clamp(0.0, 1.0),
            last_cnp_at: None,
            increase_events: 0,
            cnp_since_alpha_tick: false,
            bytes_since_increase: 0,
        }
    }

    /// Multiplicative decrease on a CNP.
    pub fn on_cnp(&mut self, now: SimTime) {
        let g = self.params.g;
        self.alpha = ((1.0 - g) * self.alpha + g).clamp(0.0, 1.0);
        let prev = self.current_rate;
        self.current_rate = (prev * (1.0 - self.alpha / 2.0)).max(self.params.min_rate_bps);
        self.target_rate = prev;
        self.increase_events = 0;
        self.bytes_since_increase = 0;
        self.cnp_since_alpha_tick = true;
        self.last_cnp_at = Some(now);
    }

    /// Alpha timer expiry: decay alpha if no CNP arrived during the period.
    pub fn on_alpha_timer(&mut self) {
        if !self.cnp_since_alpha_tick {
            self.alpha *= 1.0 - self.params.g;
        }
        self.cnp_since_alpha_tick = false;
    }

    pub fn phase(&self) -> IncreasePhase {
        if self.increase_events < self.params.fast_recovery_steps {
            IncreasePhase::FastRecovery
        } else {
            IncreasePhase::Additive
        }
    }

    /// One rate-increase event (timer or byte counter).
    pub fn rate_increase(&mut self) {
        if self.phase() == IncreasePhase::Additive {
            self.target_rate = (self.target_rate + self.params.rai_bps).min(self.line_rate);
        }
        self.current_rate = ((self.current_rate + self.target_rate) / 2.0).min(self.line_rate);
        self.increase_events = self.increase_events.saturating_add(1);
    }

    /// Accounts sent bytes; returns true when the byte counter fires.
    pub fn on_bytes_sent(&mut self, bytes: u64) -> bool {
        self.bytes_since_increase += bytes;
        if self.bytes_since_increase >= self.params.byte_counter_bytes {
            self.bytes_since_increase = 0;
            true
        } else {
            false
        }
    }

    /// Nothing left for the timers to do.
    pub fn is_quiescent(&self) -> bool {
        self.current_rate >= self.line_rate && self.target_rate >= self.line_rate && self.alpha < 1e-4
    }

    pub fn needs_rate_timer(&self) -> bool {
        self.current_rate < self.line_rate || self.target_rate < self.line_rate
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const G100: f64 = 100e9;

    fn state_with_alpha(alpha: f64) -> DcqcnState {
        let mut s = DcqcnState::new(DcqcnParams::default(), G100);
        s.alpha = alpha;
        s
    }

    #[test]
    fn cnp_from_zero_alpha() {
        let mut s = state_with_alpha(0.0);
        s.on_cnp(SimTime::ZERO);
        assert!((s.alpha - 1.0 / 16.0).abs() < 1e-12);
        assert!((s.current_rate - 96.875e9).abs() < 1.0);
        assert_eq!(s.target_rate, G100);
    }

    #[test]
    fn repeated_cnps_converge_to_halving() {
        let mut s = state_with_alpha(0.0);
        for _ in 0..400 {
            s.on_cnp(SimTime::ZERO);
        }
        assert!((s.alpha - 1.0).abs() < 1e-9);
        let before = 80e9;
        s.current_rate = before;
        s.on_cnp(SimTime::ZERO);
        assert!((s.current_rate - before / 2.0).abs() < 1e3);
    }

    #[test]
    fn alpha_decays_without_cnp() {
        let mut s = state_with_alpha(0.5);
        s.on_alpha_timer();
        assert!((s.alpha - 0.5 * 15.0 / 16.0).abs() < 1e-12);
        s.on_alpha_timer();
        assert!((s.alpha - 0.5 * (15.0f64 / 16.0).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn fast_recovery_midpoint() {
        let mut s = state_with_alpha(0.0);
        s.current_rate = 50e9;
        s.target_rate = 100e9;
        s.rate_increase();
        assert!((s.current_rate - 75e9).abs() < 1.0);
    }

    #[test]
    fn saturated_rate_is_unchanged() {
        let mut s = state_with_alpha(0.0);
        for _ in 0..20 {
            s.rate_increase();
        }
        assert_eq!(s.current_rate, G100);
        assert_eq!(s.target_rate, G100);
    }

    #[test]
    fn additive_after_f_events() {
        let mut s = state_with_alpha(0.0);
        s.current_rate = 10e9;
        s.target_rate = 20e9;
        for _ in 0..5 {
            assert_eq!(s.phase(), IncreasePhase::FastRecovery);
            s.rate_increase();
        }
        assert_eq!(s.phase(), IncreasePhase::Additive);
        let t = s.target_rate;
        s.rate_increase();
        assert!((s.target_rate - (t + 5e6)).abs() < 1e-3);
    }

    #[test]
    fn rates_stay_in_bounds() {
        let mut s = state_with_alpha(1.0);
        for i in 0..10_000 {
            if i % 3 == 0 {
                s.rate_increase();
            } else {
                s.on_cnp(SimTime::ZERO);
            }
            assert!(s.current_rate > 0.0 && s.current_rate <= G100);
            assert!((0.0..=1.0).contains(&s.alpha));
        }
    }

    #[test]
    fn rtt_scaling() {
        let p = DcqcnParams::default().scaled_for_rtt(100.0);
        assert!((p.rai_bps - 500e6).abs() < 1e-3);
        assert!((p.g - 1.0 / 1600.0).abs() < 1e-12);
    }
}
