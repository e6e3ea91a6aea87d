//! Sender queue pair: message segmentation, rate pacing, the ACK window, and
//! go-back-N recovery.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::SimError;
use crate::fabric::NodeId;
use crate::transport::dcqcn::DcqcnState;
use crate::transport::packet::{ConnId, RocePacket, HEADER_BYTES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MsgId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowClass {
    InterDc,
    IntraDc,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub id: MsgId,
    pub size: u64,
    pub created_at: SimTime,
    pub completed_at: Option<SimTime>,
    pub class: FlowClass,
}

impl Message {
    pub fn fct(&self) -> Option<SimTime> {
        self.completed_at.map(|c| c - self.created_at)
    }
}

pub fn packet_count(size: u64, mtu: u32) -> u64 {
    size.div_ceil(mtu as u64)
}

/// Payload of the `index`-th packet of a `size`-byte message.
pub fn packet_payload(size: u64, mtu: u32, index: u64) -> u32 {
    let start = index * mtu as u64;
    (size - start).min(mtu as u64) as u32
}

/// Splits a message into DATA packets with consecutive psns from `first_psn`.
pub fn segment_message(
    conn: ConnId,
    size: u64,
    mtu: u32,
    first_psn: u32,
    src: NodeId,
    dst: NodeId,
) -> Result<Vec<RocePacket>, SimError> {
    if size == 0 {
        return Err(SimError::config("messages must carry at least one byte"));
    }
    let n = packet_count(size, mtu);
    Ok((0..n)
        .map(|i| {
            RocePacket::data(
                conn,
                first_psn + i as u32,
                packet_payload(size, mtu, i),
                src,
                dst,
                i + 1 == n,
            )
        })
        .collect())
}

#[derive(Clone, Debug)]
struct QpMessage {
    id: MsgId,
    first_psn: u32,
    end_psn: u32,
    size: u64,
    completed: bool,
}

impl QpMessage {
    fn wire_size(&self, psn: u32, mtu: u32) -> u32 {
        packet_payload(self.size, mtu, (psn - self.first_psn) as u64) + HEADER_BYTES
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tick {
    Emit { pkt: RocePacket, byte_counter_fired: bool },
    /// Pacing gate; the next packet becomes eligible at this time.
    RetryAt(SimTime),
    /// The window is full; progress waits for an acknowledgment.
    WindowClosed,
    Idle,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AckOutcome {
    pub advanced: bool,
    pub completed: Vec<MsgId>,
}

#[derive(Clone, Debug)]
pub struct QueuePairState {
    pub conn: ConnId,
    pub src: NodeId,
    pub dst: NodeId,
    pub mtu: u32,
    pub snd_nxt: u32,
    pub snd_una: u32,
    snd_max: u32,
    next_psn: u32,
    msgs: VecDeque<QpMessage>,
    pub cc: DcqcnState,
    /// `None` is an unbounded window.
    pub window_cap: Option<u64>,
    inflight: u64,
    next_pace_ns: f64,
    sent_at: VecDeque<(u32, SimTime)>,
    srtt_ns: f64,
    pub retransmitted_packets: u64,
}

impl QueuePairState {
    pub fn new(
        conn: ConnId,
        src: NodeId,
        dst: NodeId,
        mtu: u32,
        cc: DcqcnState,
        window_cap: Option<u64>,
        initial_rtt: SimTime,
    ) -> Self {
        Self {
            conn,
            src,
            dst,
            mtu,
            snd_nxt: 0,
            snd_una: 0,
            snd_max: 0,
            next_psn: 0,
            msgs: VecDeque::new(),
            cc,
            window_cap,
            inflight: 0,
            next_pace_ns: 0.0,
            sent_at: VecDeque::new(),
            srtt_ns: initial_rtt.as_nanos() as f64,
            retransmitted_packets: 0,
        }
    }

    pub fn current_rate(&self) -> f64 {
        self.cc.current_rate
    }

    pub fn target_rate(&self) -> f64 {
        self.cc.target_rate
    }

    pub fn alpha(&self) -> f64 {
        self.cc.alpha
    }

    pub fn last_cnp_at(&self) -> Option<SimTime> {
        self.cc.last_cnp_at
    }

    pub fn inflight_bytes(&self) -> u64 {
        self.inflight
    }

    pub fn srtt(&self) -> SimTime {
        SimTime::from_nanos(self.srtt_ns.round() as u64)
    }

    /// Highest psn ever transmitted, plus one.
    pub fn snd_max(&self) -> u32 {
        self.snd_max
    }

    pub fn has_pending_data(&self) -> bool {
        self.snd_nxt < self.next_psn
    }

    pub fn has_unacked(&self) -> bool {
        self.snd_una < self.snd_max
    }

    pub fn is_drained(&self) -> bool {
        self.msgs.is_empty()
    }

    /// Queues a message and returns its psn range `[first, end)`.
    pub fn enqueue_message(&mut self, id: MsgId, size: u64) -> Result<(u32, u32), SimError> {
        if size == 0 {
            return Err(SimError::config("messages must carry at least one byte"));
        }
        let first = self.next_psn;
        let n = packet_count(size, self.mtu) as u32;
        let end = first + n;
        self.msgs.push_back(QpMessage {
            id,
            first_psn: first,
            end_psn: end,
            size,
            completed: false,
        });
        self.next_psn = end;
        Ok((first, end))
    }

    fn message_at(&self, psn: u32) -> Option<&QpMessage> {
        self.msgs.iter().find(|m| psn >= m.first_psn && psn < m.end_psn)
    }

    fn wire_size(&self, psn: u32) -> u32 {
        self.message_at(psn)
            .map(|m| m.wire_size(psn, self.mtu))
            .expect("psn outside of any queued message")
    }

    fn bytes_between(&self, from: u32, to: u32) -> u64 {
        (from..to).map(|p| self.wire_size(p) as u64).sum()
    }

    /// Decides whether the next packet may leave now.
    pub fn sender_tick(&mut self, now: SimTime) -> Tick {
        if !self.has_pending_data() {
            return Tick::Idle;
        }
        let psn = self.snd_nxt;
        let msg = self.message_at(psn).expect("pending psn outside of any queued message");
        let size = msg.wire_size(psn, self.mtu);
        let last = psn + 1 == msg.end_psn;
        if let Some(cap) = self.window_cap {
            if self.inflight > 0 && self.inflight + size as u64 > cap {
                return Tick::WindowClosed;
            }
        }
        let now_ns = now.as_nanos() as f64;
        if now_ns + 1e-6 < self.next_pace_ns {
            return Tick::RetryAt(SimTime::from_nanos(self.next_pace_ns.ceil() as u64));
        }
        let pkt = RocePacket::data(self.conn, psn, size - HEADER_BYTES, self.src, self.dst, last);
        self.inflight += size as u64;
        if psn >= self.snd_max {
            self.sent_at.push_back((psn, now));
        } else {
            self.retransmitted_packets += 1;
        }
        self.snd_nxt += 1;
        self.snd_max = self.snd_max.max(self.snd_nxt);
        let gap_ns = pkt.bits() as f64 * 1e9 / self.cc.current_rate;
        self.next_pace_ns = self.next_pace_ns.max(now_ns) + gap_ns;
        let fired = self.cc.on_bytes_sent(size as u64);
        Tick::Emit {
            pkt,
            byte_counter_fired: fired,
        }
    }

    /// Cumulative acknowledgment (ACK or pseudo-ACK) for psn `p`.
    ///
    /// `completes` controls whether the acknowledgment also settles message
    /// completion; pseudo-ACKs only move the window.
    pub fn on_ack(&mut self, p: u32, completes: bool) -> Result<AckOutcome, SimError> {
        if p > self.snd_max {
            return Err(SimError::Protocol(format!(
                "{:?}: ack {p} beyond highest sent psn {}",
                self.conn, self.snd_max
            )));
        }
        let mut out = AckOutcome::default();
        if p > self.snd_una {
            let freed_to = p.min(self.snd_nxt);
            if freed_to > self.snd_una {
                self.inflight -= self.bytes_between(self.snd_una, freed_to);
            }
            self.snd_una = p;
            if self.snd_nxt < p {
                self.snd_nxt = p;
            }
            out.advanced = true;
        }
        if completes {
            out.completed = self.complete_through(p);
        }
        self.prune();
        Ok(out)
    }

    /// Records an RTT sample for the packet acknowledged by cumulative `p`.
    pub fn sample_rtt(&mut self, p: u32, now: SimTime) {
        let mut sample = None;
        while let Some(&(psn, t)) = self.sent_at.front() {
            if psn >= p {
                break;
            }
            if psn + 1 == p {
                sample = Some(now - t);
            }
            self.sent_at.pop_front();
        }
        if let Some(s) = sample {
            self.srtt_ns = 0.875 * self.srtt_ns + 0.125 * s.as_nanos() as f64;
        }
    }

    /// Go-back-N on NACK(p). Stale NACKs below `snd_una` are ignored.
    pub fn on_nack(&mut self, p: u32, completes: bool) -> Result<AckOutcome, SimError> {
        if p < self.snd_una {
            return Ok(AckOutcome::default());
        }
        let out = self.on_ack(p, completes)?;
        self.rewind_to(p);
        Ok(out)
    }

    /// Retransmission timeout: resend everything from `snd_una`.
    pub fn on_timeout(&mut self) {
        let una = self.snd_una;
        self.rewind_to(una);
    }

    fn rewind_to(&mut self, p: u32) {
        debug_assert!(p >= self.snd_una);
        if p < self.snd_nxt {
            self.inflight -= self.bytes_between(p, self.snd_nxt);
            self.snd_nxt = p;
        }
        // Karn: no RTT samples from retransmitted ranges.
        self.sent_at.retain(|&(psn, _)| psn < p);
    }

    /// End-to-end delivery record `p` (cumulative); completes messages only.
    pub fn on_completion_record(&mut self, p: u32) -> Vec<MsgId> {
        let done = self.complete_through(p);
        self.prune();
        done
    }

    fn complete_through(&mut self, p: u32) -> Vec<MsgId> {
        let mut done = Vec::new();
        for m in self.msgs.iter_mut() {
            if m.end_psn > p {
                break;
            }
            if !m.completed {
                m.completed = true;
                done.push(m.id);
            }
        }
        done
    }

    fn prune(&mut self) {
        while let Some(m) = self.msgs.front() {
            if m.completed && m.end_psn <= self.snd_una {
                self.msgs.pop_front();
            } else {
                break;
            }
        }
    }

    /// Retransmission timeout for the current RTT estimate.
    pub fn rto(&self, min: SimTime) -> SimTime {
        SimTime::from_nanos((3.0 * self.srtt_ns).round() as u64).max(min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::dcqcn::DcqcnParams;

    const MTU: u32 = 4096;

    fn qp(window: Option<u64>, rate: f64) -> QueuePairState {
        let mut cc = DcqcnState::new(DcqcnParams::default(), 100e9);
        cc.current_rate = rate;
        QueuePairState::new(ConnId(1), NodeId(0), NodeId(1), MTU, cc, window, SimTime::from_micros(10))
    }

    fn send_n(q: &mut QueuePairState, n: usize) {
        let mut t = SimTime::ZERO;
        let mut sent = 0;
        while sent < n {
            match q.sender_tick(t) {
                Tick::Emit { .. } => sent += 1,
                Tick::RetryAt(at) => t = at,
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn segment_8mb() {
        let pk = segment_message(ConnId(0), 8 << 20, MTU, 0, NodeId(0), NodeId(1)).unwrap();
        assert_eq!(pk.len(), (8usize << 20).div_ceil(4096));
        assert_eq!(pk.len(), 2048);
        assert!(pk.windows(2).all(|w| w[1].psn == w[0].psn + 1));
        assert!(pk.last().unwrap().last);
        assert!(pk[..2047].iter().all(|p| !p.last));
    }

    #[test]
    fn segment_small_and_remainder() {
        let one = segment_message(ConnId(0), 1024, MTU, 0, NodeId(0), NodeId(1)).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].payload(), 1024);
        let two = segment_message(ConnId(0), 4097, MTU, 10, NodeId(0), NodeId(1)).unwrap();
        assert_eq!(two.iter().map(|p| p.payload()).collect::<Vec<_>>(), vec![4096, 1]);
        assert_eq!(two[1].psn, 11);
        assert!(segment_message(ConnId(0), 0, MTU, 0, NodeId(0), NodeId(1)).is_err());
    }

    #[test]
    fn closed_window_stalls() {
        let mut q = qp(Some(3 * 4144), 100e9);
        q.enqueue_message(MsgId(0), 1 << 20).unwrap();
        let mut t = SimTime::ZERO;
        let mut sent = 0;
        for _ in 0..100 {
            match q.sender_tick(t) {
                Tick::Emit { .. } => sent += 1,
                Tick::RetryAt(at) => t = at,
                Tick::WindowClosed => break,
                Tick::Idle => unreachable!(),
            }
        }
        assert_eq!(sent, 3);
        assert_eq!(q.sender_tick(SimTime::from_millis(100)), Tick::WindowClosed);
    }

    #[test]
    fn pacing_gap_includes_header() {
        let mut q = qp(None, 100e9);
        q.enqueue_message(MsgId(0), 1 << 20).unwrap();
        assert!(matches!(q.sender_tick(SimTime::ZERO), Tick::Emit { .. }));
        let oracle: f64 = (4096.0 + 48.0) * 8.0 / 100e9 * 1e9;
        match q.sender_tick(SimTime::ZERO) {
            Tick::RetryAt(t) => assert_eq!(t.as_nanos(), oracle.ceil() as u64),
            other => panic!("expected pacing retry, got {other:?}"),
        }
        assert!((q.next_pace_ns - oracle).abs() < 1e-9);
        assert!((oracle - 331.52).abs() < 1e-9);
    }

    #[test]
    fn ack_frees_window() {
        let mut q = qp(None, 1e15);
        q.enqueue_message(MsgId(0), 20 * 4096).unwrap();
        send_n(&mut q, 20);
        q.on_ack(10, true).unwrap();
        assert_eq!(q.snd_una, 10);
        assert_eq!(q.inflight_bytes(), 10 * 4144);
        q.on_ack(15, true).unwrap();
        assert_eq!(q.snd_una, 15);
        assert_eq!(q.inflight_bytes(), 5 * 4144);
        let stale = q.on_ack(8, true).unwrap();
        assert!(!stale.advanced);
        assert_eq!(q.snd_una, 15);
    }

    #[test]
    fn nack_goes_back_n() {
        let mut q = qp(None, 1e15);
        q.enqueue_message(MsgId(0), 20 * 4096).unwrap();
        send_n(&mut q, 20);
        q.on_nack(12, true).unwrap();
        assert_eq!(q.snd_nxt, 12);
        assert_eq!(q.snd_una, 12);
        assert_eq!(q.inflight_bytes(), 0);
        match q.sender_tick(SimTime::from_millis(1)) {
            Tick::Emit { pkt, .. } => assert_eq!(pkt.psn, 12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ack_beyond_sent_is_protocol_violation() {
        let mut q = qp(None, 1e15);
        q.enqueue_message(MsgId(0), 4 * 4096).unwrap();
        send_n(&mut q, 1);
        assert!(matches!(q.on_ack(3, true), Err(SimError::Protocol(_))));
    }

    #[test]
    fn pseudo_ack_does_not_complete() {
        let mut q = qp(None, 1e15);
        q.enqueue_message(MsgId(7), 2 * 4096).unwrap();
        send_n(&mut q, 2);
        let out = q.on_ack(2, false).unwrap();
        assert!(out.completed.is_empty());
        assert_eq!(q.on_completion_record(2), vec![MsgId(7)]);
        assert!(q.on_completion_record(2).is_empty());
        assert!(q.is_drained());
    }

    #[test]
    fn window_throughput_bound() {
        // One RTT of 10 ms with a 1 MB window: at most 1 MB per RTT.
        let cap = 1u64 << 20;
        let oracle_bps = cap as f64 * 8.0 / 10e-3;
        let mut q = qp(Some(cap), 100e9);
        q.enqueue_message(MsgId(0), 64 << 20).unwrap();
        let rtt = SimTime::from_millis(10);
        let mut t = SimTime::ZERO;
        let mut sent_bytes = 0u64;
        let mut outstanding: VecDeque<(SimTime, u32)> = VecDeque::new();
        let horizon = SimTime::from_millis(200);
        while t < horizon {
            while let Some(&(at, p)) = outstanding.front() {
                if at <= t {
                    q.on_ack(p + 1, true).unwrap();
                    outstanding.pop_front();
                } else {
                    break;
                }
            }
            match q.sender_tick(t) {
                Tick::Emit { pkt, .. } => {
                    sent_bytes += pkt.size as u64;
                    outstanding.push_back((t + rtt, pkt.psn));
                }
                Tick::RetryAt(at) => t = at,
                Tick::WindowClosed => t = outstanding.front().unwrap().0,
                Tick::Idle => break,
            }
        }
        let rate = sent_bytes as f64 * 8.0 / horizon.as_secs_f64();
        assert!(rate <= oracle_bps * 1.01, "rate {rate} vs bound {oracle_bps}");
        assert!(rate >= oracle_bps * 0.9);
        assert!(oracle_bps <= 0.84e9);
    }
}
