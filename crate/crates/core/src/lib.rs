//! Packet-level discrete-event simulator for long-haul RDMA between two
//! datacenters joined by an OTN link, with four end-to-end schemes: plain
//! DCQCN, an ungated pseudo-ACK relay, RTT-scaled DCQCN and MatchRDMA
//! (budget-gated pseudo-ACKs with destination-side rate estimation).
//!
//! Typical use goes through [`runner::run_scenario`] with a
//! [`config::ScenarioConfig`]; the lower-level modules are public for
//! experiments that need the pieces.

pub mod baselines;
pub mod config;
pub mod engine;
pub mod error;
pub mod fabric;
pub mod metrics;
pub mod otn;
pub mod runner;
pub mod scenarios;
pub mod sim;
pub mod transport;
pub mod workload;
