//! Rate budgets and the inter-OTN control messages that carry them.

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::otn::slots::CongestionLevel;

/// Every control message occupies this many bytes on the subchannel.
pub const CONTROL_MSG_BYTES: u32 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBudget {
    pub rate_bps: f64,
    pub epoch: u64,
    pub issued_at: SimTime,
    pub valid_for: SimTime,
}

impl RateBudget {
    pub fn floor(rate_floor_bps: f64, valid_for: SimTime) -> Self {
        Self {
            rate_bps: rate_floor_bps,
            epoch: 0,
            issued_at: SimTime::ZERO,
            valid_for,
        }
    }

    pub fn is_stale(&self, now: SimTime, one_way: SimTime) -> bool {
        now > self.issued_at + self.valid_for + one_way
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ControlKind {
    DelayProbe,
    DelayProbeEcho { probe_sent_at: SimTime },
    BudgetUpdate(RateBudget),
    CongestionSummary(CongestionLevel),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlMessage {
    pub kind: ControlKind,
    pub sent_at: SimTime,
}

impl ControlMessage {
    pub fn size_bytes(&self) -> u32 {
        CONTROL_MSG_BYTES
    }
}

/// One-way delay from a probe/echo exchange over symmetric, synchronized links.
pub fn one_way_from_echo(probe_sent_at: SimTime, echo_received_at: SimTime) -> SimTime {
    SimTime::from_nanos((echo_received_at - probe_sent_at).as_nanos() / 2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InstallOutcome {
    Installed,
    StaleEpoch,
}

/// Source-side budget register: epoch-monotone installation and staleness.
#[derive(Clone, Debug)]
pub struct BudgetRegister {
    installed: RateBudget,
    rate_floor_bps: f64,
    history: Vec<(SimTime, u64, f64)>,
}

impl BudgetRegister {
    pub fn new(rate_floor_bps: f64, valid_for: SimTime) -> Self {
        Self {
            installed: RateBudget::floor(rate_floor_bps, valid_for),
            rate_floor_bps,
            history: vec![(SimTime::ZERO, 0, rate_floor_bps)],
        }
    }

    pub fn installed(&self) -> &RateBudget {
        &self.installed
    }

    pub fn offer(&mut self, b: RateBudget, now: SimTime) -> InstallOutcome {
        if b.epoch <= self.installed.epoch {
            return InstallOutcome::StaleEpoch;
        }
        self.installed = b;
        self.history.push((now, b.epoch, b.rate_bps));
        InstallOutcome::Installed
    }

    /// Gate rate in force at `now`; a budget past its validity falls to the floor.
    pub fn effective_rate(&self, now: SimTime, one_way: SimTime) -> f64 {
        if self.installed.epoch > 0 && self.installed.is_stale(now, one_way) {
            self.rate_floor_bps
        } else {
            self.installed.rate_bps
        }
    }

    /// `(install time, epoch, rate)` for every installation, starting with the floor.
    pub fn history(&self) -> &[(SimTime, u64, f64)] {
        &self.history
    }
}

/// Destination-side emission policy: epoch assignment and small-change suppression.
#[derive(Clone, Debug)]
pub struct BudgetEmitter {
    epoch: u64,
    last_sent: Option<(SimTime, f64)>,
    delta: f64,
    valid_for: SimTime,
    pub skipped: u64,
}

impl BudgetEmitter {
    pub fn new(delta: f64, valid_for: SimTime) -> Self {
        Self {
            epoch: 0,
            last_sent: None,
            delta,
            valid_for,
            skipped: 0,
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn last_rate(&self) -> Option<f64> {
        self.last_sent.map(|(_, r)| r)
    }

    /// Returns the budget to send, or `None` if the update is suppressed.
    ///
    /// `urgent` updates (out-of-cycle tightening) are never suppressed. A
    /// regular update whose relative change is below `delta` is skipped
    /// unless the previous one is halfway to expiry.
    pub fn decide(&mut self, rate_bps: f64, now: SimTime, urgent: bool) -> Option<RateBudget> {
        if !urgent {
            if let Some((at, prev)) = self.last_sent {
                let small = prev > 0.0 && ((rate_bps - prev) / prev).abs() < self.delta;
                let fresh = now - at < SimTime::from_nanos(self.valid_for.as_nanos() / 2);
                if small && fresh {
                    self.skipped += 1;
                    return None;
                }
            }
        }
        self.epoch += 1;
        self.last_sent = Some((now, rate_bps));
        Some(RateBudget {
            rate_bps,
            epoch: self.epoch,
            issued_at: now,
            valid_for: self.valid_for,
        })
    }
}
