//! Receiver side of a queue pair: cumulative ACKs, go-back-N NACKs and
//! rate-limited CNP generation.

use crate::engine::SimTime;
use crate::transport::packet::{ConnId, Ecn, PacketKind, RocePacket};
use crate::fabric::NodeId;

#[derive(Clone, Debug)]
pub struct ReceiverState {
    pub conn: ConnId,
    /// This endpoint (the data destination).
    pub local: NodeId,
    /// The data sender.
    pub peer: NodeId,
    pub expected: u32,
    nack_sent_for: Option<u32>,
    last_cnp_at: Option<SimTime>,
    cnp_min_interval: SimTime,
    coalesce: u32,
    since_ack: u32,
    pub delivered_bytes: u64,
    pub duplicates: u64,
    pub cnps_sent: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RxOutcome {
    pub ack: Option<RocePacket>,
    pub cnp: Option<RocePacket>,
    /// Payload accepted into the in-order stream by this packet.
    pub delivered: u32,
}

impl ReceiverState {
    pub fn new(conn: ConnId, local: NodeId, peer: NodeId, cnp_min_interval: SimTime, coalesce: u32) -> Self {
        Self {
            conn,
            local,
            peer,
            expected: 0,
            nack_sent_for: None,
            last_cnp_at: None,
            cnp_min_interval,
            coalesce: coalesce.max(1),
            since_ack: 0,
            delivered_bytes: 0,
            duplicates: 0,
            cnps_sent: 0,
        }
    }

    fn control(&self, kind: PacketKind, psn: u32) -> RocePacket {
        RocePacket::header_only(self.conn, psn, kind, self.local, self.peer)
    }

    /// Handles one DATA packet.
    ///
    /// In-order data is ACKed every `coalesce` packets and always on the last
    /// packet of a message. A gap produces one NACK per expected psn until the
    /// gap closes. Duplicates are re-ACKed and discarded.
    pub fn on_data(&mut self, pkt: &RocePacket, now: SimTime) -> RxOutcome {
        debug_assert!(pkt.kind.is_data());
        let mut out = RxOutcome {
            cnp: self.on_ecn(pkt, now),
            ..RxOutcome::default()
        };
        if pkt.psn == self.expected {
            self.expected += 1;
            self.nack_sent_for = None;
            self.delivered_bytes += pkt.payload() as u64;
            out.delivered = pkt.payload();
            self.since_ack += 1;
            if self.since_ack >= self.coalesce || pkt.last {
                self.since_ack = 0;
                out.ack = Some(self.control(PacketKind::Ack, self.expected));
            }
        } else if pkt.psn < self.expected {
            self.duplicates += 1;
            out.ack = Some(self.control(PacketKind::Ack, self.expected));
        } else if self.nack_sent_for != Some(self.expected) {
            self.nack_sent_for = Some(self.expected);
            out.ack = Some(self.control(PacketKind::Nack, self.expected));
        }
        out
    }

    /// CNP for a CE-marked packet unless one was sent within the minimum interval.
    pub fn on_ecn(&mut self, pkt: &RocePacket, now: SimTime) -> Option<RocePacket> {
        if pkt.ecn != Ecn::Ce {
            return None;
        }
        if let Some(last) = self.last_cnp_at {
            if now - last < self.cnp_min_interval {
                return None;
            }
        }
        self.last_cnp_at = Some(now);
        self.cnps_sent += 1;
        Some(self.control(PacketKind::Cnp, pkt.psn))
    }
}

/// Per-connection CNP rate limiter, shared by receivers and the source-side proxy.
#[derive(Clone, Copy, Debug)]
pub struct CnpLimiter {
    pub min_interval: SimTime,
    last: Option<SimTime>,
}

impl CnpLimiter {
    pub fn new(min_interval: SimTime) -> Self {
        Self { min_interval, last: None }
    }

    pub fn try_fire(&mut self, now: SimTime) -> bool {
        match self.last {
            Some(l) if now - l < self.min_interval => false,
            _ => {
                self.last = Some(now);
                true
            }
        }
    }
}
