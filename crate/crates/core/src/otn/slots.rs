//! Slot-level congestion classification, stable-window detection and the
//! weighted rate-budget estimate.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CongestionLevel {
    Low,
    Med,
    High,
}

impl CongestionLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            CongestionLevel::Low => "LOW",
            CongestionLevel::Med => "MED",
            CongestionLevel::High => "HIGH",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotThresholds {
    pub theta_ack: SimTime,
    /// CNPs per second.
    pub theta_cnp_per_s: f64,
}

/// One closed observation slot at the destination OTN.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotObservation {
    pub index: u64,
    pub start: SimTime,
    pub end: SimTime,
    /// Bytes egressed into the receiving DC.
    pub delivered_bytes: u64,
    /// Drain opportunity left unused because the buffer was empty.
    pub spare_bytes: u64,
    pub ack_return_samples: Vec<SimTime>,
    pub cnp_count: u32,
    pub level: CongestionLevel,
}

impl SlotObservation {
    pub fn span(&self) -> SimTime {
        self.end - self.start
    }

    pub fn delivered_rate_bps(&self) -> f64 {
        self.delivered_bytes as f64 * 8.0 / self.span().as_secs_f64()
    }

    /// Rate the estimator sees: delivered plus idle drain headroom.
    pub fn sample_rate_bps(&self) -> f64 {
        (self.delivered_bytes + self.spare_bytes) as f64 * 8.0 / self.span().as_secs_f64()
    }

    pub fn mean_ack_return(&self) -> Option<f64> {
        if self.ack_return_samples.is_empty() {
            None
        } else {
            let s: u64 = self.ack_return_samples.iter().map(|d| d.as_nanos()).sum();
            Some(s as f64 / self.ack_return_samples.len() as f64)
        }
    }
}

/// Congestion level of a slot from its ACK-return delay and CNP frequency.
pub fn classify_slot(
    mean_ack_return: Option<f64>,
    cnp_count: u32,
    delivered_bytes: u64,
    span: SimTime,
    th: &SlotThresholds,
) -> CongestionLevel {
    if mean_ack_return.is_none() && delivered_bytes == 0 {
        return CongestionLevel::Low;
    }
    let ack = mean_ack_return.unwrap_or(0.0);
    let theta = th.theta_ack.as_nanos() as f64;
    let cnp_rate = cnp_count as f64 / span.as_secs_f64();
    if ack > theta || cnp_rate > th.theta_cnp_per_s {
        CongestionLevel::High
    } else if ack <= theta / 2.0 && cnp_count == 0 {
        CongestionLevel::Low
    } else {
        CongestionLevel::Med
    }
}

/// Rate and level of one history slot, as consumed by window detection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotSample {
    pub rate_bps: f64,
    pub level: CongestionLevel,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Partition {
    pub windows: Vec<Range<usize>>,
    pub jitter: Vec<usize>,
}

impl Partition {
    pub fn stable_slots(&self) -> usize {
        self.windows.iter().map(|w| w.len()).sum()
    }
}

/// Population coefficient of variation; an all-zero run counts as stable.
pub(crate) fn cv(n: f64, sum: f64, sum_sq: f64) -> f64 {
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    if mean <= 0.0 {
        if var <= 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        var.sqrt() / mean
    }
}

/// Splits the history into stable windows and jitter slots.
///
/// HIGH slots are always jitter and break runs. Scanning left to right, each
/// window is the longest run starting at the current slot with CV below
/// `eps` and at least `min_len` slots; a slot that starts no such run is a
/// jitter slot.
pub fn detect_stable_windows(history: &[SlotSample], min_len: usize, eps: f64) -> Partition {
    let n = history.len();
    let mut s1 = vec![0.0f64; n + 1];
    let mut s2 = vec![0.0f64; n + 1];
    for (i, h) in history.iter().enumerate() {
        // Values are scaled to Gbps to keep the squared sums well conditioned.
        let x = h.rate_bps * 1e-9;
        s1[i + 1] = s1[i] + x;
        s2[i + 1] = s2[i] + x * x;
    }
    let mut out = Partition::default();
    let min_len = min_len.max(1);
    let mut i = 0;
    while i < n {
        if history[i].level == CongestionLevel::High {
            out.jitter.push(i);
            i += 1;
            continue;
        }
        let mut seg_end = i;
        while seg_end < n && history[seg_end].level != CongestionLevel::High {
            seg_end += 1;
        }
        let mut found = None;
        let mut j = seg_end;
        while j >= i + min_len {
            let len = (j - i) as f64;
            if cv(len, s1[j] - s1[i], s2[j] - s2[i]) < eps {
                found = Some(j);
                break;
            }
            j -= 1;
        }
        match found {
            Some(j) => {
                out.windows.push(i..j);
                i = j;
            }
            None => {
                out.jitter.push(i);
                i += 1;
            }
        }
    }
    out
}

/// Nearest-rank quantile of `values` (unsorted); `None` when empty.
pub fn nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let rank = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[rank - 1])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorWeights {
    pub w_stable: f64,
    pub w_jitter: f64,
    pub jitter_quantile: f64,
    pub beta: f64,
    pub headroom: f64,
    pub rate_floor_bps: f64,
    pub capacity_bps: f64,
}

/// Weighted budget estimate over a partitioned history.
pub fn estimate_rate_budget(history: &[SlotSample], part: &Partition, level: CongestionLevel, w: &EstimatorWeights) -> f64 {
    if history.is_empty() {
        return w.rate_floor_bps;
    }
    let stable: Vec<f64> = part.windows.iter().flat_map(|r| r.clone()).map(|i| history[i].rate_bps).collect();
    let jitter: Vec<f64> = part.jitter.iter().map(|&i| history[i].rate_bps).collect();
    let r_stable = if stable.is_empty() {
        0.0
    } else {
        stable.iter().sum::<f64>() / stable.len() as f64
    };
    let r_jitter = nearest_rank(&jitter, w.jitter_quantile).unwrap_or(0.0);
    let ws = w.w_stable * stable.len() as f64;
    let wj = w.w_jitter * jitter.len() as f64;
    let mut raw = if ws + wj > 0.0 {
        (ws * r_stable + wj * r_jitter) / (ws + wj)
    } else {
        0.0
    };
    if level == CongestionLevel::High {
        raw *= w.beta;
    }
    (raw * w.headroom).clamp(w.rate_floor_bps, w.capacity_bps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(rate_gbps: f64) -> SlotSample {
        SlotSample {
            rate_bps: rate_gbps * 1e9,
            level: CongestionLevel::Low,
        }
    }

    fn th() -> SlotThresholds {
        SlotThresholds {
            theta_ack: SimTime::from_micros(12),
            theta_cnp_per_s: 10_000.0,
        }
    }

    fn weights(headroom: f64) -> EstimatorWeights {
        EstimatorWeights {
            w_stable: 4.0,
            w_jitter: 1.0,
            jitter_quantile: 0.25,
            beta: 0.5,
            headroom,
            rate_floor_bps: 1e9,
            capacity_bps: 1.6e12,
        }
    }

    /// Independent brute-force partition: recomputes mean and deviation from
    /// scratch for every candidate run.
    fn oracle_partition(h: &[SlotSample], w: usize, eps: f64) -> Partition {
        let stable = |a: usize, b: usize| {
            if h[a..b].iter().any(|x| x.level == CongestionLevel::High) {
                return false;
            }
            let xs: Vec<f64> = h[a..b].iter().map(|x| x.rate_bps).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
            if m == 0.0 {
                sd == 0.0
            } else {
                sd / m < eps
            }
        };
        let mut p = Partition::default();
        let mut i = 0;
        while i < h.len() {
            let best = (i + w..=h.len()).rev().find(|&j| stable(i, j));
            match best {
                Some(j) => {
                    p.windows.push(i..j);
                    i = j;
                }
                None => {
                    p.jitter.push(i);
                    i += 1;
                }
            }
        }
        p
    }

    #[test]
    fn classify_rules() {
        let span = SimTime::from_micros(100);
        let t = th();
        let q = t.theta_ack.as_nanos() as f64;
        assert_eq!(classify_slot(Some(q / 4.0), 0, 1, span, &t), CongestionLevel::Low);
        // 2 x 10 CNP/ms over 100 us = 2 CNPs.
        assert_eq!(classify_slot(Some(q / 4.0), 2, 1, span, &t), CongestionLevel::High);
        assert_eq!(classify_slot(Some(0.8 * q), 1, 1, span, &t), CongestionLevel::Med);
        assert_eq!(classify_slot(None, 0, 0, span, &t), CongestionLevel::Low);
        assert_eq!(classify_slot(Some(1.5 * q), 0, 1, span, &t), CongestionLevel::High);
    }

    #[test]
    fn constant_history_is_one_window() {
        let h = vec![s(50.0); 64];
        let p = detect_stable_windows(&h, 8, 0.1);
        assert_eq!(p.windows, vec![0..64]);
        assert!(p.jitter.is_empty());
    }

    #[test]
    fn alternating_history_is_all_jitter() {
        let h: Vec<_> = (0..32).map(|i| s(if i % 2 == 0 { 0.0 } else { 100.0 })).collect();
        let p = detect_stable_windows(&h, 4, 0.1);
        assert!(p.windows.is_empty());
        assert_eq!(p.jitter.len(), 32);
    }

    #[test]
    fn spike_splits_into_two_windows() {
        let mut h = vec![s(50.0); 10];
        h.extend([s(100.0), s(100.0)]);
        h.extend(vec![s(50.0); 10]);
        let p = detect_stable_windows(&h, 4, 0.1);
        assert_eq!(p, oracle_partition(&h, 4, 0.1));
        assert_eq!(p.windows.len(), 2);
        assert_eq!(p.jitter, vec![10, 11]);
    }

    #[test]
    fn high_slot_breaks_window() {
        let mut h = vec![s(50.0); 20];
        h[10].level = CongestionLevel::High;
        let p = detect_stable_windows(&h, 4, 0.1);
        assert_eq!(p.windows, vec![0..10, 11..20]);
        assert_eq!(p.jitter, vec![10]);
    }

    #[test]
    fn degenerate_estimate() {
        let h = vec![s(50.0); 16];
        let p = detect_stable_windows(&h, 8, 0.1);
        let r = estimate_rate_budget(&h, &p, CongestionLevel::Low, &weights(1.0));
        assert!((r - 50e9).abs() < 1.0);
    }

    #[test]
    fn cold_start_is_floor() {
        let r = estimate_rate_budget(&[], &Partition::default(), CongestionLevel::Low, &weights(0.95));
        assert_eq!(r, 1e9);
    }

    #[test]
    fn weighted_example() {
        let mut h = vec![s(80.0); 8];
        h.push(s(10.0));
        h.push(s(40.0));
        let p = Partition {
            windows: vec![0..8],
            jitter: vec![8, 9],
        };
        let r = estimate_rate_budget(&h, &p, CongestionLevel::Med, &weights(1.0));
        let oracle = (4.0 * 8.0 * 80e9 + 1.0 * 2.0 * 10e9) / (4.0 * 8.0 + 1.0 * 2.0);
        assert!((r - oracle).abs() < 1.0);
        assert!((r / 1e9 - 75.882).abs() < 0.001);
        assert_eq!(detect_stable_windows(&h, 8, 0.1), p);
    }

    #[test]
    fn high_level_tightens() {
        let h = vec![s(80.0); 8];
        let p = detect_stable_windows(&h, 8, 0.1);
        let r = estimate_rate_budget(&h, &p, CongestionLevel::High, &weights(1.0));
        assert!((r - 40e9).abs() < 1.0);
    }

    #[test]
    fn nearest_rank_quantile() {
        assert_eq!(nearest_rank(&[40.0, 10.0], 0.25), Some(10.0));
        assert_eq!(nearest_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), Some(2.0));
        assert_eq!(nearest_rank(&[], 0.25), None);
    }

    proptest::proptest! {
        #[test]
        fn partition_matches_oracle_and_covers(
            rates in proptest::collection::vec(0u32..4, 8..64),
            high in proptest::collection::vec(proptest::bool::weighted(0.1), 64),
            w in 2usize..10,
        ) {
            let h: Vec<SlotSample> = rates.iter().enumerate().map(|(i, &r)| SlotSample {
                rate_bps: [50e9, 52e9, 90e9, 0.0][r as usize],
                level: if high[i] { CongestionLevel::High } else { CongestionLevel::Med },
            }).collect();
            let p = detect_stable_windows(&h, w, 0.1);
            let mut covered = vec![0u8; h.len()];
            for r in &p.windows {
                proptest::prop_assert!(r.len() >= w);
                for i in r.clone() { covered[i] += 1; }
            }
            for &j in &p.jitter { covered[j] += 1; }
            proptest::prop_assert!(covered.iter().all(|&c| c == 1));
            proptest::prop_assert_eq!(p, oracle_partition(&h, w, 0.1));
        }
    }
}
