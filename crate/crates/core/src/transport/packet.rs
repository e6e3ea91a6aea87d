use serde::{Deserialize, Serialize};

use crate::fabric::NodeId;

/// RoCE base transport header plus IP/UDP/Ethernet framing, in bytes.
pub const HEADER_BYTES: u32 = 48;

/// Queue-pair identifier, as parsed from the transport header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConnId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ecn {
    NotEct,
    Ect,
    Ce,
}

/// Host-level control operations carried in `PacketKind::Control`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HostControl {
    /// Connection establishment; `psn` carries the initial sequence number.
    Handshake,
    /// End-to-end delivery record relayed by the source OTN; `psn` is cumulative.
    Completion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PacketKind {
    Data,
    Ack,
    Nack,
    Cnp,
    PseudoAck,
    Control(HostControl),
}

impl PacketKind {
    pub fn is_data(self) -> bool {
        matches!(self, PacketKind::Data)
    }
}

/// The simulated wire unit.
///
/// On ACK, NACK and pseudo-ACK packets `psn` is cumulative: every DATA packet
/// with a smaller psn has been received in order (NACK additionally names the
/// psn the receiver expects next).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RocePacket {
    pub conn: ConnId,
    pub psn: u32,
    pub kind: PacketKind,
    pub ecn: Ecn,
    /// Bytes on the wire, header included.
    pub size: u32,
    pub src: NodeId,
    pub dst: NodeId,
    /// Set on the final DATA packet of a message.
    pub last: bool,
}

impl RocePacket {
    pub fn data(conn: ConnId, psn: u32, payload: u32, src: NodeId, dst: NodeId, last: bool) -> Self {
        debug_assert!(payload > 0);
        Self {
            conn,
            psn,
            kind: PacketKind::Data,
            ecn: Ecn::Ect,
            size: payload + HEADER_BYTES,
            src,
            dst,
            last,
        }
    }

    /// Header-only packet (ACK, NACK, CNP, pseudo-ACK, control).
    pub fn header_only(conn: ConnId, psn: u32, kind: PacketKind, src: NodeId, dst: NodeId) -> Self {
        debug_assert!(!kind.is_data());
        Self {
            conn,
            psn,
            kind,
            ecn: Ecn::NotEct,
            size: HEADER_BYTES,
            src,
            dst,
            last: false,
        }
    }

    pub fn payload(&self) -> u32 {
        if self.kind.is_data() {
            self.size - HEADER_BYTES
        } else {
            0
        }
    }

    pub fn bits(&self) -> u64 {
        self.size as u64 * 8
    }
}
