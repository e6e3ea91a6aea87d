//! Links, egress queues with ECN and PFC, and the dual-DC topology.

pub mod link;
pub mod queue;
pub mod topology;

pub use link::{long_haul_delay, LinkConfig, Serializer, FIBER_NS_PER_KM};
pub use queue::{ecn_decide, EcnConfig, Enqueue, PfcFrame, PfcGate, PortQueue, QueueConfig, Queued};
pub use topology::{mix64, Link, LinkClass, LinkId, NodeId, NodeKind, Topology, TopologyConfig};
