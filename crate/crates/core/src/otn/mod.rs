//! OTN edge control: the source-side relay and gate, the destination-side
//! estimator, the budget channel and the buffer-requirement calculator.

pub mod bucket;
pub mod budget;
pub mod buffer;
pub mod dest;
pub mod slots;
pub mod source;

use serde::{Deserialize, Serialize};

use crate::error::SimError;

pub use bucket::TokenBucket;
pub use budget::{
    one_way_from_echo, BudgetEmitter, BudgetRegister, ControlKind, ControlMessage, InstallOutcome, RateBudget,
    CONTROL_MSG_BYTES,
};
pub use buffer::{required_buffer, RateTrace};
pub use dest::DestEstimator;
pub use slots::{
    classify_slot, detect_stable_windows, estimate_rate_budget, nearest_rank, CongestionLevel, EstimatorWeights,
    Partition, SlotObservation, SlotSample, SlotThresholds,
};
pub use source::{ConnectionStateEntry, DataVerdict, EndAckAction, Release, SourceOtn, SourceParams};

/// Tunables of the OTN edges. Thresholds that depend on the topology
/// (`theta_ack`) are given as multiples of the intra-DC base RTT.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OtnParams {
    pub t_slot_ns: u64,
    pub history_slots: usize,
    pub min_window_slots: usize,
    pub cv_eps: f64,
    pub w_stable: f64,
    pub w_jitter: f64,
    pub jitter_quantile: f64,
    pub beta: f64,
    pub headroom: f64,
    pub rate_floor_bps: f64,
    pub update_every_slots: u32,
    pub delta: f64,
    pub valid_for_ns: u64,
    pub theta_ack_rtt_multiple: f64,
    pub theta_cnp_per_ms: f64,
    pub theta_proxy_bytes: u64,
    pub bucket_burst_bytes: u64,
    pub control_rate_bps: f64,
    /// Destination-OTN buffer.
    pub dest_buffer_bytes: u64,
    /// Source-OTN staging back-pressure toward the sending DC.
    pub staging_xoff_bytes: u64,
    pub staging_xon_bytes: u64,
}

impl Default for OtnParams {
    fn default() -> Self {
        Self {
            t_slot_ns: 100_000,
            history_slots: 64,
            min_window_slots: 8,
            cv_eps: 0.1,
            w_stable: 4.0,
            w_jitter: 1.0,
            jitter_quantile: 0.25,
            beta: 0.5,
            headroom: 0.95,
            rate_floor_bps: 1e9,
            update_every_slots: 10,
            delta: 0.05,
            valid_for_ns: 10_000_000,
            theta_ack_rtt_multiple: 3.0,
            theta_cnp_per_ms: 10.0,
            theta_proxy_bytes: 128 * 1024,
            bucket_burst_bytes: 64 * 1024,
            control_rate_bps: 1e9,
            dest_buffer_bytes: 64 * 1024 * 1024,
            staging_xoff_bytes: 16 * 1024 * 1024,
            staging_xon_bytes: 8 * 1024 * 1024,
        }
    }
}

impl OtnParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::config(format!("otn: {m}")));
        if self.t_slot_ns == 0 {
            return bad("t_slot_ns must be positive");
        }
        if self.history_slots < self.min_window_slots || self.min_window_slots == 0 {
            return bad("history_slots must be at least min_window_slots >= 1");
        }
        if !(0.0..=1.0).contains(&self.jitter_quantile) || !(0.0..=1.0).contains(&self.beta) {
            return bad("jitter_quantile and beta must lie in [0, 1]");
        }
        if !(self.headroom > 0.0 && self.headroom <= 1.0) {
            return bad("headroom must lie in (0, 1]");
        }
        if !(self.rate_floor_bps > 0.0) {
            return bad("rate_floor_bps must be positive");
        }
        if self.staging_xon_bytes >= self.staging_xoff_bytes {
            return bad("staging xon must be below xoff");
        }
        if self.w_stable < 0.0 || self.w_jitter < 0.0 || self.cv_eps <= 0.0 {
            return bad("weights must be non-negative and cv_eps positive");
        }
        Ok(())
    }
}
