//! End-host RoCE transport.

pub mod dcqcn;
pub mod packet;
pub mod qp;
pub mod receiver;

pub use dcqcn::{DcqcnParams, DcqcnState, IncreasePhase};
pub use packet::{ConnId, Ecn, HostControl, PacketKind, RocePacket, HEADER_BYTES};
pub use qp::{packet_count, packet_payload, segment_message, AckOutcome, FlowClass, Message, MsgId, QueuePairState, Tick};
pub use receiver::{CnpLimiter, ReceiverState, RxOutcome};
