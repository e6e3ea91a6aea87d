//! Source-side OTN relay: connection tracking, staging behind the budget
//! gate, pseudo-ACK generation, relay retransmission and the CNP proxy.

use std::collections::{BTreeMap, VecDeque};

use crate::engine::SimTime;
use crate::fabric::{NodeId, Queued};
use crate::otn::bucket::TokenBucket;
use crate::transport::{CnpLimiter, ConnId, Ecn, HostControl, PacketKind, RocePacket};

#[derive(Clone, Debug)]
pub struct ConnectionStateEntry {
    pub conn: ConnId,
    pub sender: NodeId,
    pub receiver: NodeId,
    /// Next psn accepted from the sender; anything below it is a duplicate.
    pub staged_next: u32,
    /// One past the highest psn forwarded onto the long haul.
    pub forwarded_next: u32,
    pub pseudo_acked: u32,
    pub end_acked: u32,
    /// Forwarded packets not yet end-to-end acknowledged, `[end_acked, forwarded_next)`.
    pub retrans_buffer: VecDeque<RocePacket>,
    staging: VecDeque<Queued>,
    staged_bytes: u64,
    cnp: CnpLimiter,
    last_progress: SimTime,
}

impl ConnectionStateEntry {
    fn new(conn: ConnId, sender: NodeId, receiver: NodeId, initial_psn: u32, cnp_min_interval: SimTime, now: SimTime) -> Self {
        Self {
            conn,
            sender,
            receiver,
            staged_next: initial_psn,
            forwarded_next: initial_psn,
            pseudo_acked: initial_psn,
            end_acked: initial_psn,
            retrans_buffer: VecDeque::new(),
            staging: VecDeque::new(),
            staged_bytes: 0,
            cnp: CnpLimiter::new(cnp_min_interval),
            last_progress: now,
        }
    }

    pub fn staged_bytes(&self) -> u64 {
        self.staged_bytes
    }

    pub fn staged_packets(&self) -> usize {
        self.staging.len()
    }

    pub fn buffered_bytes(&self) -> u64 {
        self.retrans_buffer.iter().map(|p| p.size as u64).sum()
    }

    /// Pointer ordering and buffer contents, checked by tests and debug runs.
    pub fn check(&self) -> Result<(), String> {
        if !(self.end_acked <= self.pseudo_acked && self.pseudo_acked <= self.forwarded_next && self.forwarded_next <= self.staged_next) {
            return Err(format!(
                "{:?}: pointers out of order end={} pseudo={} fwd={} staged={}",
                self.conn, self.end_acked, self.pseudo_acked, self.forwarded_next, self.staged_next
            ));
        }
        let expect = self.end_acked..self.forwarded_next;
        if self.retrans_buffer.len() != expect.len()
            || self.retrans_buffer.iter().zip(expect).any(|(p, e)| p.psn != e)
        {
            return Err(format!("{:?}: retransmission buffer does not cover [{}, {})", self.conn, self.end_acked, self.forwarded_next));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceParams {
    pub pseudo_ack: bool,
    pub proxy_cnp: bool,
    pub theta_proxy_bytes: u64,
    pub cnp_min_interval: SimTime,
    pub relay_rto: SimTime,
}

/// Outcome of a DATA packet reaching the source OTN from its own DC.
#[derive(Clone, Debug, PartialEq)]
pub enum DataVerdict {
    /// Untracked connection: forward as a plain switch would.
    Passthrough(Queued),
    Staged { proxy_cnp: Option<RocePacket> },
    Duplicate(Queued),
}

/// What to do with an end-to-end ACK/NACK arriving from the remote DC.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EndAckAction {
    /// Packet to pass to the sender unchanged.
    pub forward: Option<RocePacket>,
    /// Delivery record for the sender (message completion).
    pub completion: Option<RocePacket>,
    /// Relay retransmissions toward the destination.
    pub retransmit: Vec<RocePacket>,
}

#[derive(Clone, Debug)]
pub struct Release {
    pub pkt: RocePacket,
    pub in_link: Option<crate::fabric::LinkId>,
    pub pseudo_ack: Option<RocePacket>,
}

#[derive(Clone, Debug)]
pub struct SourceOtn {
    pub node: NodeId,
    pub params: SourceParams,
    pub bucket: TokenBucket,
    conns: BTreeMap<ConnId, ConnectionStateEntry>,
    rr: VecDeque<ConnId>,
    retx_queue: VecDeque<RocePacket>,
    staged_total: u64,
    pub peak_staged: u64,
    pub forwarded_bytes: u64,
    pub relay_retransmits: u64,
    pub proxy_cnps: u64,
    pub duplicates: u64,
}

impl SourceOtn {
    pub fn new(node: NodeId, params: SourceParams, bucket: TokenBucket) -> Self {
        Self {
            node,
            params,
            bucket,
            conns: BTreeMap::new(),
            rr: VecDeque::new(),
            retx_queue: VecDeque::new(),
            staged_total: 0,
            peak_staged: 0,
            forwarded_bytes: 0,
            relay_retransmits: 0,
            proxy_cnps: 0,
            duplicates: 0,
        }
    }

    /// Handshake observed for an inter-DC connection. A live entry is reset.
    pub fn on_flow_setup(&mut self, conn: ConnId, sender: NodeId, receiver: NodeId, initial_psn: u32, now: SimTime) {
        if let Some(old) = self.conns.remove(&conn) {
            self.staged_total -= old.staged_bytes;
            self.rr.retain(|c| *c != conn);
            self.retx_queue.retain(|p| p.conn != conn);
        }
        self.conns.insert(
            conn,
            ConnectionStateEntry::new(conn, sender, receiver, initial_psn, self.params.cnp_min_interval, now),
        );
    }

    pub fn entry(&self, conn: ConnId) -> Option<&ConnectionStateEntry> {
        self.conns.get(&conn)
    }

    pub fn entries(&self) -> impl Iterator<Item = &ConnectionStateEntry> {
        self.conns.values()
    }

    pub fn is_tracked(&self, conn: ConnId) -> bool {
        self.conns.contains_key(&conn)
    }

    pub fn staged_total(&self) -> u64 {
        self.staged_total
    }

    pub fn has_backlog(&self) -> bool {
        self.staged_total > 0 || !self.retx_queue.is_empty()
    }

    fn proxy_signal(&mut self, conn: ConnId, now: SimTime) -> Option<RocePacket> {
        if !self.params.proxy_cnp {
            return None;
        }
        let node = self.node;
        let e = self.conns.get_mut(&conn)?;
        if e.cnp.try_fire(now) {
            self.proxy_cnps += 1;
            Some(RocePacket::header_only(conn, e.staged_next, PacketKind::Cnp, node, e.sender))
        } else {
            None
        }
    }

    pub fn on_data(&mut self, mut item: Queued, now: SimTime) -> DataVerdict {
        let conn = item.pkt.conn;
        let Some(e) = self.conns.get_mut(&conn) else {
            return DataVerdict::Passthrough(item);
        };
        if item.pkt.psn != e.staged_next {
            self.duplicates += 1;
            return DataVerdict::Duplicate(item);
        }
        // The source-side ECN loop terminates here: the mark becomes a proxy
        // CNP and is not carried across the long haul.
        let ce = item.pkt.ecn == Ecn::Ce;
        if ce && self.params.proxy_cnp {
            item.pkt.ecn = Ecn::Ect;
        }
        e.staged_next += 1;
        e.staged_bytes += item.pkt.size as u64;
        let over = e.staged_bytes > self.params.theta_proxy_bytes;
        let was_idle = e.staging.is_empty();
        e.staging.push_back(item);
        if was_idle {
            self.rr.push_back(conn);
        }
        self.staged_total += item.pkt.size as u64;
        self.peak_staged = self.peak_staged.max(self.staged_total);
        let proxy_cnp = if over || ce { self.proxy_signal(conn, now) } else { None };
        DataVerdict::Staged { proxy_cnp }
    }

    /// Releases whatever the gate admits now. Relay retransmissions go first.
    /// Returns the released packets and, if backlog remains, when to retry.
    pub fn release(&mut self, now: SimTime, out: &mut Vec<Release>) -> Option<SimTime> {
        while let Some(p) = self.retx_queue.front() {
            if !self.bucket.try_consume(p.size, now) {
                return self.bucket.ready_at(p.size, now);
            }
            let p = self.retx_queue.pop_front().expect("front exists");
            self.forwarded_bytes += p.size as u64;
            out.push(Release {
                pkt: p,
                in_link: None,
                pseudo_ack: None,
            });
        }
        while let Some(conn) = self.rr.pop_front() {
            let e = self.conns.get_mut(&conn).expect("round-robin entry is tracked");
            let size = e.staging.front().expect("listed connections have staged data").pkt.size;
            if !self.bucket.try_consume(size, now) {
                self.rr.push_front(conn);
                return self.bucket.ready_at(size, now);
            }
            let item = e.staging.pop_front().expect("front exists");
            e.staged_bytes -= size as u64;
            self.staged_total -= size as u64;
            if e.retrans_buffer.is_empty() {
                e.last_progress = now;
            }
            e.forwarded_next = item.pkt.psn + 1;
            e.retrans_buffer.push_back(item.pkt);
            let pseudo_ack = if self.params.pseudo_ack {
                e.pseudo_acked = e.forwarded_next;
                Some(RocePacket::header_only(conn, e.pseudo_acked, PacketKind::PseudoAck, self.node, e.sender))
            } else {
                None
            };
            if !e.staging.is_empty() {
                self.rr.push_back(conn);
            }
            self.forwarded_bytes += size as u64;
            out.push(Release {
                pkt: item.pkt,
                in_link: item.in_link,
                pseudo_ack,
            });
        }
        None
    }

    /// End-to-end ACK or NACK from the receiver for a tracked connection.
    pub fn on_end_ack(&mut self, pkt: &RocePacket, now: SimTime) -> EndAckAction {
        let mut act = EndAckAction::default();
        let node = self.node;
        let Some(e) = self.conns.get_mut(&pkt.conn) else {
            act.forward = Some(*pkt);
            return act;
        };
        let p = pkt.psn;
        let oldest = e.end_acked;
        if pkt.kind == PacketKind::Nack && p < oldest {
            act.forward = Some(*pkt);
            return act;
        }
        let mut completes = false;
        if p > e.end_acked {
            while let Some(front) = e.retrans_buffer.front() {
                if front.psn >= p {
                    break;
                }
                completes |= front.last;
                e.retrans_buffer.pop_front();
            }
            e.end_acked = p.min(e.forwarded_next);
            e.last_progress = now;
        }
        if completes || (pkt.kind == PacketKind::Ack && p > e.pseudo_acked) {
            act.completion = Some(RocePacket::header_only(
                pkt.conn,
                e.end_acked,
                PacketKind::Control(HostControl::Completion),
                node,
                e.sender,
            ));
        }
        // Without pseudo-ACKs the end-to-end ACK is the only window credit.
        if pkt.kind == PacketKind::Ack && p > e.pseudo_acked {
            act.forward = Some(*pkt);
        }
        if pkt.kind == PacketKind::Nack && !e.retrans_buffer.is_empty() {
            act.retransmit = e.retrans_buffer.iter().copied().collect();
            self.relay_retransmits += act.retransmit.len() as u64;
            e.last_progress = now;
        }
        act
    }

    /// Queues retransmissions behind the gate.
    pub fn queue_retransmit(&mut self, pkts: impl IntoIterator<Item = RocePacket>) {
        self.retx_queue.extend(pkts);
    }

    /// Go-back-N from the relay for connections with no end-to-end progress
    /// within the relay timeout.
    pub fn check_timeouts(&mut self, now: SimTime) -> Vec<RocePacket> {
        let mut out = Vec::new();
        for e in self.conns.values_mut() {
            if !e.retrans_buffer.is_empty() && now - e.last_progress >= self.params.relay_rto {
                e.last_progress = now;
                out.extend(e.retrans_buffer.iter().copied());
            }
        }
        self.relay_retransmits += out.len() as u64;
        out
    }

    pub fn has_unacked(&self) -> bool {
        self.conns.values().any(|e| !e.retrans_buffer.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: NodeId = NodeId(1);
    const R: NodeId = NodeId(2);
    const O: NodeId = NodeId(50);

    fn params() -> SourceParams {
        SourceParams {
            pseudo_ack: true,
            proxy_cnp: true,
            theta_proxy_bytes: 128 * 1024,
            cnp_min_interval: SimTime::from_micros(50),
            relay_rto: SimTime::from_millis(1),
        }
    }

    fn otn(bucket: TokenBucket) -> SourceOtn {
        let mut o = SourceOtn::new(O, params(), bucket);
        o.on_flow_setup(ConnId(7), S, R, 0, SimTime::ZERO);
        o
    }

    fn q(psn: u32) -> Queued {
        let mut p = RocePacket::data(ConnId(7), psn, 4096, S, R, false);
        p.last = psn % 10 == 9;
        Queued { pkt: p, in_link: None }
    }

    fn feed(o: &mut SourceOtn, range: std::ops::Range<u32>) -> Vec<Release> {
        let mut out = Vec::new();
        for p in range {
            o.on_data(q(p), SimTime::ZERO);
            o.release(SimTime::ZERO, &mut out);
        }
        out
    }

    #[test]
    fn setup_initializes_and_resets() {
        let mut o = otn(TokenBucket::unlimited());
        let e = o.entry(ConnId(7)).unwrap();
        assert_eq!((e.staged_next, e.forwarded_next, e.pseudo_acked, e.end_acked), (0, 0, 0, 0));
        feed(&mut o, 0..5);
        assert_eq!(o.entry(ConnId(7)).unwrap().retrans_buffer.len(), 5);
        o.on_flow_setup(ConnId(7), S, R, 0, SimTime::ZERO);
        assert!(o.entry(ConnId(7)).unwrap().retrans_buffer.is_empty());
        assert!(!o.is_tracked(ConnId(8)));
        assert!(matches!(
            o.on_data(Queued { pkt: RocePacket::data(ConnId(8), 0, 10, S, R, true), in_link: None }, SimTime::ZERO),
            DataVerdict::Passthrough(_)
        ));
    }

    #[test]
    fn exhausted_gate_holds() {
        let mut o = otn(TokenBucket::new(0.0, 0));
        let out = feed(&mut o, 0..3);
        assert!(out.is_empty());
        assert_eq!(o.entry(ConnId(7)).unwrap().pseudo_acked, 0);
        assert_eq!(o.staged_total(), 3 * 4144);
    }

    #[test]
    fn open_gate_pseudo_acks_each_packet() {
        let mut o = otn(TokenBucket::unlimited());
        let out = feed(&mut o, 0..4);
        let acks: Vec<u32> = out.iter().map(|r| r.pseudo_ack.unwrap().psn).collect();
        assert_eq!(acks, vec![1, 2, 3, 4]);
        assert!(out.iter().all(|r| r.pseudo_ack.unwrap().dst == S));
        o.entry(ConnId(7)).unwrap().check().unwrap();
    }

    #[test]
    fn end_ack_trims_and_is_suppressed() {
        let mut o = otn(TokenBucket::unlimited());
        feed(&mut o, 0..30);
        let ack = RocePacket::header_only(ConnId(7), 20, PacketKind::Ack, R, S);
        let act = o.on_end_ack(&ack, SimTime::ZERO);
        assert!(act.forward.is_none());
        assert_eq!(act.completion.unwrap().psn, 20);
        let e = o.entry(ConnId(7)).unwrap();
        assert_eq!(e.retrans_buffer.front().unwrap().psn, 20);
        assert_eq!(e.retrans_buffer.len(), 10);
        e.check().unwrap();
    }

    #[test]
    fn nack_inside_buffer_is_relayed() {
        let mut o = otn(TokenBucket::unlimited());
        feed(&mut o, 0..30);
        o.on_end_ack(&RocePacket::header_only(ConnId(7), 20, PacketKind::Ack, R, S), SimTime::ZERO);
        let act = o.on_end_ack(&RocePacket::header_only(ConnId(7), 25, PacketKind::Nack, R, S), SimTime::ZERO);
        assert!(act.forward.is_none());
        assert_eq!(act.retransmit.iter().map(|p| p.psn).collect::<Vec<_>>(), (25..30).collect::<Vec<_>>());
    }

    #[test]
    fn nack_below_buffer_passes_through() {
        let mut o = otn(TokenBucket::unlimited());
        feed(&mut o, 0..30);
        o.on_end_ack(&RocePacket::header_only(ConnId(7), 20, PacketKind::Ack, R, S), SimTime::ZERO);
        let nack = RocePacket::header_only(ConnId(7), 5, PacketKind::Nack, R, S);
        let act = o.on_end_ack(&nack, SimTime::ZERO);
        assert_eq!(act.forward, Some(nack));
        assert!(act.retransmit.is_empty());
    }

    #[test]
    fn proxy_cnp_above_threshold_only() {
        let mut o = otn(TokenBucket::new(0.0, 0));
        let mut cnps = 0;
        for p in 0..31 {
            if let DataVerdict::Staged { proxy_cnp: Some(_) } = o.on_data(q(p), SimTime::ZERO) {
                cnps += 1;
            }
        }
        // 31 x 4144 B is still under 128 KiB.
        assert_eq!(cnps, 0);
        let mut t = SimTime::ZERO;
        for p in 31..200 {
            t = t + SimTime::from_micros(1);
            if let DataVerdict::Staged { proxy_cnp: Some(_) } = o.on_data(q(p), t) {
                cnps += 1;
            }
        }
        // 169 us of overload at a 50 us minimum interval.
        assert_eq!(cnps, 4);
    }

    #[test]
    fn duplicates_are_dropped() {
        let mut o = otn(TokenBucket::unlimited());
        feed(&mut o, 0..5);
        assert!(matches!(o.on_data(q(3), SimTime::ZERO), DataVerdict::Duplicate(_)));
    }

    #[test]
    fn relay_timeout_resends_buffer() {
        let mut o = otn(TokenBucket::unlimited());
        feed(&mut o, 0..4);
        assert!(o.check_timeouts(SimTime::from_micros(999)).is_empty());
        assert_eq!(o.check_timeouts(SimTime::from_millis(1)).len(), 4);
    }
}
