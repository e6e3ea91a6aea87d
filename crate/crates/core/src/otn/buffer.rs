//! Minimum runtime buffer for a rate mismatch over an uncertainty window.
//!
//! For piecewise-constant input and output rates the windowed integral
//! `f(t) = ∫_t^{t+τ} (r_in − r_out)^+ du` is piecewise linear in `t`, with
//! kinks only where `t` or `t + τ` meets a breakpoint. The supremum is
//! therefore attained at one of those candidate starts, and evaluating them
//! is exact.

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::SimError;

/// Piecewise-constant rate over `[0, end)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTrace {
    /// `(start_ns, rate_bps)`, strictly increasing starts beginning at 0.
    segments: Vec<(u64, f64)>,
    end: u64,
}

impl RateTrace {
    pub fn new(segments: Vec<(u64, f64)>, end: u64) -> Result<Self, SimError> {
        if let Some(&(first, _)) = segments.first() {
            if first != 0 {
                return Err(SimError::config("rate trace must start at t = 0"));
            }
        }
        if segments.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(SimError::config("rate trace breakpoints must strictly increase"));
        }
        if segments.iter().any(|&(s, r)| s >= end || !(r >= 0.0) || !r.is_finite()) {
            return Err(SimError::config("rate trace segments must be finite, non-negative and within the horizon"));
        }
        Ok(Self { segments, end })
    }

    pub fn constant(rate_bps: f64, end: SimTime) -> Self {
        Self {
            segments: vec![(0, rate_bps)],
            end: end.as_nanos(),
        }
    }

    /// Builds a trace from `(time, rate)` change points, for example a budget
    /// history. Repeated timestamps keep the last value.
    pub fn from_steps(steps: &[(SimTime, f64)], end: SimTime) -> Result<Self, SimError> {
        let mut segs: Vec<(u64, f64)> = Vec::with_capacity(steps.len() + 1);
        if steps.first().is_none_or(|s| s.0 > SimTime::ZERO) {
            segs.push((0, 0.0));
        }
        for &(t, r) in steps {
            let t = t.as_nanos();
            if t >= end.as_nanos() {
                break;
            }
            match segs.last_mut() {
                Some(last) if last.0 == t => last.1 = r,
                _ => segs.push((t, r)),
            }
        }
        Self::new(segs, end.as_nanos())
    }

    pub fn end(&self) -> u64 {
        self.end
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty() || self.end == 0
    }

    pub fn segments(&self) -> &[(u64, f64)] {
        &self.segments
    }

    pub fn rate_at(&self, t_ns: u64) -> f64 {
        match self.segments.partition_point(|&(s, _)| s <= t_ns) {
            0 => 0.0,
            i => self.segments[i - 1].1,
        }
    }
}

/// Sup over window starts of the positive excess volume in `[t, t + tau)`,
/// in bytes. Windows are restricted to the common horizon. A `tau` longer
/// than the horizon degenerates to the single window covering all of it.
pub fn required_buffer(r_in: &RateTrace, r_out: &RateTrace, tau: SimTime) -> f64 {
    let horizon = r_in.end.min(r_out.end);
    if r_in.is_empty() || horizon == 0 || tau == SimTime::ZERO {
        return 0.0;
    }
    let tau = tau.as_nanos().min(horizon);

    // Breakpoints of g = (r_in - r_out)^+ on [0, horizon].
    let mut bps: Vec<u64> = r_in
        .segments
        .iter()
        .chain(r_out.segments.iter())
        .map(|&(s, _)| s)
        .filter(|&s| s < horizon)
        .collect();
    bps.push(0);
    bps.push(horizon);
    bps.sort_unstable();
    bps.dedup();

    // Prefix integral of g at every breakpoint, in bits.
    let mut prefix = Vec::with_capacity(bps.len());
    let mut acc = 0.0f64;
    prefix.push(0.0);
    for w in bps.windows(2) {
        let g = (r_in.rate_at(w[0]) - r_out.rate_at(w[0])).max(0.0);
        acc += g * (w[1] - w[0]) as f64 * 1e-9;
        prefix.push(acc);
    }
    let integral = |x: u64| -> f64 {
        let i = bps.partition_point(|&b| b <= x) - 1;
        if bps[i] == x {
            return prefix[i];
        }
        let g = (r_in.rate_at(bps[i]) - r_out.rate_at(bps[i])).max(0.0);
        prefix[i] + g * (x - bps[i]) as f64 * 1e-9
    };

    let last_start = horizon - tau;
    let mut best = 0.0f64;
    let mut eval = |t: u64| {
        if t <= last_start {
            best = best.max(integral(t + tau) - integral(t));
        }
    };
    eval(0);
    eval(last_start);
    for &b in &bps {
        eval(b);
        if b >= tau {
            eval(b - tau);
        }
    }
    best / 8.0
}
