//! Egress port queues: two strict-priority classes, ECN marking on the data
//! class, and PFC pause bookkeeping.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::SimError;
use crate::fabric::LinkId;
use crate::transport::{Ecn, PacketKind, RocePacket};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EcnConfig {
    pub kmin_bytes: u64,
    pub kmax_bytes: u64,
    pub pmax: f64,
}

impl Default for EcnConfig {
    fn default() -> Self {
        Self {
            kmin_bytes: 100 * 1024,
            kmax_bytes: 400 * 1024,
            pmax: 1.0,
        }
    }
}

impl EcnConfig {
    pub fn validate(&self, capacity: u64) -> Result<(), SimError> {
        if self.kmin_bytes >= self.kmax_bytes || self.kmax_bytes > capacity {
            return Err(SimError::config(format!(
                "ECN thresholds must satisfy kmin < kmax <= capacity ({} / {} / {capacity})",
                self.kmin_bytes, self.kmax_bytes
            )));
        }
        if !(0.0..=1.0).contains(&self.pmax) {
            return Err(SimError::config("ECN pmax must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Marking probability at `occupancy` bytes.
    pub fn mark_probability(&self, occupancy: u64) -> f64 {
        if occupancy < self.kmin_bytes {
            0.0
        } else if occupancy >= self.kmax_bytes {
            1.0
        } else {
            let span = (self.kmax_bytes - self.kmin_bytes) as f64;
            self.pmax * (occupancy - self.kmin_bytes) as f64 / span
        }
    }
}

/// RED-style marking decision taken at enqueue time.
pub fn ecn_decide<R: Rng + ?Sized>(occupancy: u64, cfg: &EcnConfig, rng: &mut R) -> bool {
    let p = cfg.mark_probability(occupancy);
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.gen::<f64>() < p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PfcFrame {
    Pause,
    Resume,
}

/// Edge-triggered XOFF/XON hysteresis over an occupancy counter.
#[derive(Clone, Debug)]
pub struct PfcGate {
    pub xoff: u64,
    pub xon: u64,
    asserted: bool,
    pauses: u64,
    resumes: u64,
}

impl PfcGate {
    pub fn new(xoff: u64, xon: u64) -> Result<Self, SimError> {
        if xon >= xoff {
            return Err(SimError::config(format!("PFC requires xon < xoff ({xon} / {xoff})")));
        }
        Ok(Self {
            xoff,
            xon,
            asserted: false,
            pauses: 0,
            resumes: 0,
        })
    }

    /// Call on every change of the counter; returns a frame on a threshold crossing.
    pub fn update(&mut self, occupancy: u64) -> Option<PfcFrame> {
        if !self.asserted && occupancy > self.xoff {
            self.asserted = true;
            self.pauses += 1;
            Some(PfcFrame::Pause)
        } else if self.asserted && occupancy < self.xon {
            self.asserted = false;
            self.resumes += 1;
            Some(PfcFrame::Resume)
        } else {
            None
        }
    }

    pub fn is_asserted(&self) -> bool {
        self.asserted
    }

    pub fn frames(&self) -> (u64, u64) {
        (self.pauses, self.resumes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Queued {
    pub pkt: RocePacket,
    /// Link the packet arrived on, for ingress (PFC) accounting at this node.
    pub in_link: Option<LinkId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Enqueue {
    Accepted { marked: bool },
    Dropped,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueueConfig {
    pub capacity_bytes: u64,
    pub ecn: EcnConfig,
    pub ecn_enabled: bool,
}

impl Default for QueueConfig {
    fn default() -> Self {
        Self {
            capacity_bytes: 8 * 1024 * 1024,
            ecn: EcnConfig::default(),
            ecn_enabled: true,
        }
    }
}

/// Egress queue of one directed link.
///
/// Only the data class is bounded, ECN-marked and pausable; the control
/// class (ACK, NACK, CNP, pseudo-ACK, control) is served first.
#[derive(Clone, Debug)]
pub struct PortQueue {
    pub capacity: u64,
    pub ecn: Option<EcnConfig>,
    occupancy: u64,
    peak: u64,
    data: VecDeque<Queued>,
    control: VecDeque<Queued>,
    paused: bool,
    paused_since: SimTime,
    paused_accum: SimTime,
    pause_log: Vec<(SimTime, bool)>,
    pub drops: u64,
    pub dropped_bytes: u64,
}

impl PortQueue {
    pub fn new(cfg: &QueueConfig) -> Self {
        Self {
            capacity: cfg.capacity_bytes,
            ecn: cfg.ecn_enabled.then_some(cfg.ecn),
            occupancy: 0,
            peak: 0,
            data: VecDeque::new(),
            control: VecDeque::new(),
            paused: false,
            paused_since: SimTime::ZERO,
            paused_accum: SimTime::ZERO,
            pause_log: Vec::new(),
            drops: 0,
            dropped_bytes: 0,
        }
    }

    pub fn occupancy(&self) -> u64 {
        self.occupancy
    }

    pub fn peak(&self) -> u64 {
        self.peak
    }

    pub fn data_len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty() && self.control.is_empty()
    }

    /// Enqueues a packet. Data packets are ECN-decided against the
    /// occupancy seen on arrival and dropped if they do not fit.
    pub fn enqueue<R: Rng + ?Sized>(&mut self, mut item: Queued, rng: &mut R) -> Enqueue {
        if !matches!(item.pkt.kind, PacketKind::Data) {
            self.control.push_back(item);
            return Enqueue::Accepted { marked: false };
        }
        let size = item.pkt.size as u64;
        if self.occupancy + size > self.capacity {
            self.drops += 1;
            self.dropped_bytes += size;
            return Enqueue::Dropped;
        }
        let mut marked = false;
        if let Some(ecn) = &self.ecn {
            if item.pkt.ecn == Ecn::Ect && ecn_decide(self.occupancy, ecn, rng) {
                item.pkt.ecn = Ecn::Ce;
                marked = true;
            }
        }
        self.occupancy += size;
        self.peak = self.peak.max(self.occupancy);
        debug_assert!(self.occupancy <= self.capacity);
        self.data.push_back(item);
        Enqueue::Accepted { marked }
    }

    /// Next packet to transmit: control first, data only while unpaused.
    pub fn dequeue(&mut self) -> Option<Queued> {
        if let Some(c) = self.control.pop_front() {
            return Some(c);
        }
        if self.paused {
            return None;
        }
        let item = self.data.pop_front()?;
        self.occupancy -= item.pkt.size as u64;
        Some(item)
    }

    pub fn peek_data(&self) -> Option<&Queued> {
        self.data.front()
    }

    /// Bytes still queued or in flight for a drain at end of run.
    pub fn data_bytes_queued(&self) -> u64 {
        self.data.iter().map(|q| q.pkt.size as u64).sum()
    }

    pub fn has_sendable(&self) -> bool {
        !self.control.is_empty() || (!self.paused && !self.data.is_empty())
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn set_paused(&mut self, paused: bool, now: SimTime) {
        if paused == self.paused {
            return;
        }
        if paused {
            self.paused_since = now;
        } else {
            self.paused_accum += now - self.paused_since;
        }
        self.paused = paused;
        self.pause_log.push((now, paused));
    }

    /// Total paused duration up to `now`, including an ongoing pause.
    pub fn paused_total(&self, now: SimTime) -> SimTime {
        if self.paused {
            self.paused_accum + now.saturating_sub(self.paused_since)
        } else {
            self.paused_accum
        }
    }

    pub fn pause_log(&self) -> &[(SimTime, bool)] {
        &self.pause_log
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::NodeId;
    use crate::transport::ConnId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data_pkt(payload: u32) -> Queued {
        Queued {
            pkt: RocePacket::data(ConnId(1), 0, payload, NodeId(0), NodeId(1), false),
            in_link: None,
        }
    }

    #[test]
    fn ecn_below_kmin_never_marks() {
        let cfg = EcnConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| !ecn_decide(cfg.kmin_bytes - 1, &cfg, &mut rng)));
    }

    #[test]
    fn ecn_at_or_above_kmax_always_marks() {
        let cfg = EcnConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| ecn_decide(cfg.kmax_bytes, &cfg, &mut rng)));
    }

    #[test]
    fn ecn_midpoint_marks_half_the_time() {
        let cfg = EcnConfig {
            pmax: 1.0,
            ..EcnConfig::default()
        };
        let mid = (cfg.kmin_bytes + cfg.kmax_bytes) / 2;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let marks = (0..n).filter(|_| ecn_decide(mid, &cfg, &mut rng)).count();
        let freq = marks as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 0.02, "freq {freq}");
    }

    #[test]
    fn full_queue_drops() {
        let cfg = QueueConfig {
            capacity_bytes: 4144,
            ecn_enabled: false,
            ..QueueConfig::default()
        };
        let mut q = PortQueue::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(q.enqueue(data_pkt(4096), &mut rng), Enqueue::Accepted { marked: false });
        assert_eq!(q.occupancy(), q.capacity);
        assert_eq!(q.enqueue(data_pkt(1), &mut rng), Enqueue::Dropped);
        assert_eq!(q.drops, 1);
    }

    #[test]
    fn paused_port_holds_data_but_sends_control() {
        let mut q = PortQueue::new(&QueueConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        q.set_paused(true, SimTime(10));
        for _ in 0..3 {
            q.enqueue(data_pkt(4096), &mut rng);
        }
        q.enqueue(
            Queued {
                pkt: RocePacket::header_only(ConnId(1), 3, PacketKind::Ack, NodeId(1), NodeId(0)),
                in_link: None,
            },
            &mut rng,
        );
        assert_eq!(q.occupancy(), 3 * 4144);
        assert_eq!(q.dequeue().unwrap().pkt.kind, PacketKind::Ack);
        assert!(q.dequeue().is_none());
        q.set_paused(false, SimTime(110));
        assert!(q.dequeue().is_some());
        assert_eq!(q.paused_total(SimTime(500)), SimTime(100));
    }

    #[test]
    fn pfc_single_frame_on_rising_edge() {
        let mut g = PfcGate::new(512, 256).unwrap();
        let frames: Vec<_> = [100, 400, 600, 700, 800].iter().filter_map(|&o| g.update(o)).collect();
        assert_eq!(frames, vec![PfcFrame::Pause]);
    }

    #[test]
    fn pfc_hysteresis_band_is_silent() {
        let mut g = PfcGate::new(512, 256).unwrap();
        assert!([300, 500, 260, 511, 257].iter().all(|&o| g.update(o).is_none()));
        g.update(600);
        assert!([300, 500, 260, 511, 257].iter().all(|&o| g.update(o).is_none()));
        assert_eq!(g.update(100), Some(PfcFrame::Resume));
    }

    #[test]
    fn pfc_requires_xon_below_xoff() {
        assert!(PfcGate::new(256, 256).is_err());
    }
}
