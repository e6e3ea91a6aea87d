//! Destination-side OTN estimator: per-slot observation, congestion
//! classification, budget estimation and emission.

use std::collections::{BTreeMap, VecDeque};

use crate::engine::SimTime;
use crate::otn::budget::{BudgetEmitter, RateBudget};
use crate::otn::slots::{
    classify_slot, detect_stable_windows, estimate_rate_budget, CongestionLevel, EstimatorWeights, SlotObservation,
    SlotSample, SlotThresholds,
};
use crate::otn::OtnParams;
use crate::transport::ConnId;

#[derive(Clone, Debug)]
pub struct DestEstimator {
    pub t_slot: SimTime,
    history_len: usize,
    min_window: usize,
    cv_eps: f64,
    update_every: u32,
    thresholds: SlotThresholds,
    weights: EstimatorWeights,
    emitter: BudgetEmitter,
    history: VecDeque<SlotObservation>,
    slot_index: u64,
    slot_start: SimTime,
    delivered: u64,
    samples: Vec<SimTime>,
    cnp_count: u32,
    tightened_this_slot: bool,
    slots_since_update: u32,
    egress_log: BTreeMap<ConnId, VecDeque<(u32, SimTime)>>,
    level: CongestionLevel,
    /// Most recent regular estimate; the base for out-of-cycle tightening.
    last_regular: Option<f64>,
    pub observations: Vec<SlotObservation>,
    keep_observations: bool,
    pub cnps_absorbed: u64,
}

impl DestEstimator {
    pub fn new(p: &OtnParams, thresholds: SlotThresholds, capacity_bps: f64, keep_observations: bool) -> Self {
        Self {
            t_slot: SimTime::from_nanos(p.t_slot_ns),
            history_len: p.history_slots,
            min_window: p.min_window_slots,
            cv_eps: p.cv_eps,
            update_every: p.update_every_slots.max(1),
            thresholds,
            weights: EstimatorWeights {
                w_stable: p.w_stable,
                w_jitter: p.w_jitter,
                jitter_quantile: p.jitter_quantile,
                beta: p.beta,
                headroom: p.headroom,
                rate_floor_bps: p.rate_floor_bps,
                capacity_bps,
            },
            emitter: BudgetEmitter::new(p.delta, SimTime::from_nanos(p.valid_for_ns)),
            history: VecDeque::new(),
            slot_index: 0,
            slot_start: SimTime::ZERO,
            delivered: 0,
            samples: Vec::new(),
            cnp_count: 0,
            tightened_this_slot: false,
            slots_since_update: 0,
            egress_log: BTreeMap::new(),
            level: CongestionLevel::Low,
            last_regular: None,
            observations: Vec::new(),
            keep_observations,
            cnps_absorbed: 0,
        }
    }

    pub fn level(&self) -> CongestionLevel {
        self.level
    }

    pub fn history(&self) -> impl Iterator<Item = &SlotObservation> {
        self.history.iter()
    }

    /// A DATA packet left the destination OTN into the receiving DC.
    pub fn on_egress(&mut self, conn: ConnId, psn: u32, bytes: u32, now: SimTime) {
        self.delivered += bytes as u64;
        self.egress_log.entry(conn).or_default().push_back((psn, now));
    }

    /// A cumulative ACK(p) from the receiving DC passed the OTN: sample the
    /// return time of the packet it covers.
    pub fn on_ack(&mut self, conn: ConnId, p: u32, now: SimTime) {
        let Some(log) = self.egress_log.get_mut(&conn) else {
            return;
        };
        let mut sample = None;
        while let Some(&(psn, at)) = log.front() {
            if psn >= p {
                break;
            }
            if psn + 1 == p {
                sample = Some(now - at);
            }
            log.pop_front();
        }
        if let Some(s) = sample {
            self.samples.push(s);
        }
    }

    /// A CNP from the receiving DC; it is absorbed here. Returns an
    /// out-of-cycle tightened budget once per slot when the CNP rate crosses
    /// the HIGH threshold.
    pub fn on_cnp(&mut self, now: SimTime) -> Option<RateBudget> {
        self.cnp_count += 1;
        self.cnps_absorbed += 1;
        let rate = self.cnp_count as f64 / self.t_slot.as_secs_f64();
        if self.tightened_this_slot || rate <= self.thresholds.theta_cnp_per_s {
            return None;
        }
        self.tightened_this_slot = true;
        // Tightenings within one estimation period do not compound: the
        // first cut has not taken effect at the source yet.
        let base = self.last_regular.unwrap_or(self.weights.capacity_bps);
        let tight = (base * self.weights.beta).clamp(self.weights.rate_floor_bps, self.weights.capacity_bps);
        self.emitter.decide(tight, now, true)
    }

    /// Budget announced when the control channel comes up, before any slot
    /// has been observed: the local drain rate with headroom.
    pub fn initial_budget(&mut self, drain_bps: f64, now: SimTime) -> Option<RateBudget> {
        let rate = (drain_bps * self.weights.headroom).clamp(self.weights.rate_floor_bps, self.weights.capacity_bps);
        self.last_regular = Some(rate);
        self.emitter.decide(rate, now, true)
    }

    /// Closes the current slot. `spare_bytes` is the drain opportunity the
    /// OTN left unused while its buffer was empty; it only counts toward the
    /// rate sample in LOW slots.
    pub fn on_slot_boundary(&mut self, now: SimTime, spare_bytes: u64) -> (SlotObservation, Option<RateBudget>) {
        let span = now - self.slot_start;
        let mean = if self.samples.is_empty() {
            None
        } else {
            Some(self.samples.iter().map(|s| s.as_nanos()).sum::<u64>() as f64 / self.samples.len() as f64)
        };
        let level = classify_slot(mean, self.cnp_count, self.delivered, span, &self.thresholds);
        let obs = SlotObservation {
            index: self.slot_index,
            start: self.slot_start,
            end: now,
            delivered_bytes: self.delivered,
            spare_bytes: if level == CongestionLevel::Low { spare_bytes } else { 0 },
            ack_return_samples: std::mem::take(&mut self.samples),
            cnp_count: self.cnp_count,
            level,
        };
        self.level = level;
        self.slot_index += 1;
        self.slot_start = now;
        self.delivered = 0;
        self.cnp_count = 0;
        self.tightened_this_slot = false;
        if self.history.len() == self.history_len {
            self.history.pop_front();
        }
        self.history.push_back(obs.clone());
        if self.keep_observations {
            self.observations.push(obs.clone());
        }
        self.slots_since_update += 1;
        let mut update = None;
        if self.slots_since_update >= self.update_every {
            self.slots_since_update = 0;
            let rate = self.estimate();
            self.last_regular = Some(rate);
            update = self.emitter.decide(rate, now, false);
        }
        (obs, update)
    }

    /// Current estimate over the retained history.
    pub fn estimate(&self) -> f64 {
        let samples: Vec<SlotSample> = self
            .history
            .iter()
            .map(|o| SlotSample {
                rate_bps: o.sample_rate_bps(),
                level: o.level,
            })
            .collect();
        let part = detect_stable_windows(&samples, self.min_window, self.cv_eps);
        estimate_rate_budget(&samples, &part, self.level, &self.weights)
    }

    pub fn emitter(&self) -> &BudgetEmitter {
        &self.emitter
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est() -> DestEstimator {
        let th = SlotThresholds {
            theta_ack: SimTime::from_micros(30),
            theta_cnp_per_s: 10_000.0,
        };
        DestEstimator::new(&OtnParams::default(), th, 1.6e12, true)
    }

    #[test]
    fn idle_slot_is_low() {
        let mut e = est();
        let (o, _) = e.on_slot_boundary(SimTime::from_micros(100), 0);
        assert_eq!(o.delivered_bytes, 0);
        assert!(o.ack_return_samples.is_empty());
        assert_eq!(o.level, CongestionLevel::Low);
    }

    #[test]
    fn full_rate_slot_bytes() {
        let mut e = est();
        // 100 Gbps for 100 us.
        let per = 1_250_000u64 / 1000;
        for i in 0..1000 {
            e.on_egress(ConnId(1), i, per as u32, SimTime::from_nanos(i as u64 * 100));
        }
        let (o, _) = e.on_slot_boundary(SimTime::from_micros(100), 0);
        assert_eq!(o.delivered_bytes, 1_250_000);
        assert!((o.delivered_rate_bps() - 100e9).abs() < 1.0);
    }

    #[test]
    fn slots_tile_time() {
        let mut e = est();
        let mut total = SimTime::ZERO;
        for k in 1..=37u64 {
            let (o, _) = e.on_slot_boundary(SimTime::from_micros(100 * k), 0);
            total += o.span();
        }
        assert_eq!(total, SimTime::from_micros(3700));
    }

    #[test]
    fn ack_return_sample() {
        let mut e = est();
        e.on_egress(ConnId(1), 0, 4144, SimTime::from_micros(1));
        e.on_egress(ConnId(1), 1, 4144, SimTime::from_micros(2));
        e.on_ack(ConnId(1), 2, SimTime::from_micros(10));
        let (o, _) = e.on_slot_boundary(SimTime::from_micros(100), 0);
        assert_eq!(o.ack_return_samples, vec![SimTime::from_micros(8)]);
    }

    #[test]
    fn single_cnp_no_update_burst_one_update() {
        let mut e = est();
        e.on_egress(ConnId(1), 0, 4144, SimTime::from_micros(5));
        assert!(e.on_cnp(SimTime::from_micros(10)).is_none());
        let ups: Vec<_> = (0..20).filter_map(|i| e.on_cnp(SimTime::from_micros(11 + i))).collect();
        assert_eq!(ups.len(), 1);
        let (o, _) = e.on_slot_boundary(SimTime::from_micros(100), 0);
        assert_eq!(o.level, CongestionLevel::High);
        assert_eq!(o.cnp_count, 21);
    }

    #[test]
    fn period_update_converges_to_drain() {
        let mut e = est();
        let mut last = None;
        for k in 1..=20u64 {
            // 40 Gbps delivered, 10 Gbps of idle drain: 50 Gbps sustainable.
            e.on_egress(ConnId(1), k as u32 - 1, 500_000, SimTime::from_micros(100 * k - 50));
            let (_, u) = e.on_slot_boundary(SimTime::from_micros(100 * k), 125_000);
            if u.is_some() {
                last = u;
            }
        }
        let b = last.unwrap();
        assert!((b.rate_bps - 50e9 * 0.95).abs() < 1e6, "{}", b.rate_bps);
        // The second period repeats the same estimate and is suppressed.
        assert_eq!(b.epoch, 1);
        assert_eq!(e.emitter().skipped, 1);
    }
}
