//! Reference scenarios used by the examples and the acceptance suite.
//!
//! Each preset starts from `ScenarioConfig::default()` and changes only the
//! fields that define the experiment, so any of them can be dumped with
//! `to_json` and edited into a scenario file.

use crate::baselines::SchemeId;
use crate::config::{DrainProfile, ScenarioConfig};

fn named(id: String, scheme: SchemeId) -> ScenarioConfig {
    ScenarioConfig {
        scenario_id: id,
        scheme,
        ..ScenarioConfig::default()
    }
}

/// One point of the distance / message-size sweep: an uncontended receiving
/// DC, `concurrency` inter-DC messages per iteration, 1 MiB window.
pub fn distance_point(scheme: SchemeId, km: f64, msg_size: u64, concurrency: u32) -> ScenarioConfig {
    let mut c = named(format!("dist-{}-{km}km-{msg_size}B-c{concurrency}", scheme.as_str()), scheme);
    c.distance_km = km;
    c.workload.msg_size_bytes = msg_size;
    c.workload.concurrency = concurrency;
    c
}

/// Receiving-DC drain falls from 400 to 100 Gbps at 35 ms during 64 x 4 MiB
/// iterations at 1000 km. The drop lands after a fast first iteration
/// finishes and before a slow one does.
pub fn congestion(scheme: SchemeId) -> ScenarioConfig {
    let mut c = named(format!("congestion-{}", scheme.as_str()), scheme);
    c.workload.msg_size_bytes = 4 << 20;
    c.workload.concurrency = 64;
    c.workload.compute_ms = 20.0;
    c.drain = DrainProfile::step(400.0, 35.0, 100.0);
    c
}

/// Inter-DC iterations at 1000 km competing with intra-DC background traffic
/// at 40% of server-link capacity in both DCs.
pub fn mixed(scheme: SchemeId, msg_size: u64) -> ScenarioConfig {
    let mut c = named(format!("mixed-{}-{msg_size}B", scheme.as_str()), scheme);
    c.workload.msg_size_bytes = msg_size;
    c.workload.concurrency = 16;
    c.workload.intra_dc_load = 0.4;
    c
}

pub const STEADY_DRAIN_GBPS: f64 = 50.0;

/// Constant 50 Gbps destination drain, backlogged MatchRDMA senders, no
/// jitter.
pub fn steady_state() -> ScenarioConfig {
    let mut c = named("steady-50g".into(), SchemeId::MatchRdma);
    c.workload.msg_size_bytes = 8 << 20;
    c.workload.concurrency = 16;
    c.workload.compute_ms = 1.0;
    c.drain = DrainProfile::constant(STEADY_DRAIN_GBPS);
    c
}

/// A short run with every `drop_every`-th packet entering the
/// destination-OTN buffer discarded.
pub fn safety(scheme: SchemeId, drop_every: Option<u64>) -> ScenarioConfig {
    let mut c = named(format!("safety-{}", scheme.as_str()), scheme);
    c.distance_km = 100.0;
    c.workload.msg_size_bytes = 256 << 10;
    c.workload.concurrency = 8;
    c.workload.iterations = 2;
    c.workload.compute_ms = 0.5;
    c.force_dest_drop_every = drop_every;
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for s in SchemeId::ALL {
            distance_point(s, 1000.0, 1 << 10, 64).validate().unwrap();
            congestion(s).validate().unwrap();
            mixed(s, 8 << 20).validate().unwrap();
            safety(s, Some(97)).validate().unwrap();
        }
        steady_state().validate().unwrap();
    }

    #[test]
    fn presets_differ_only_in_scheme() {
        let a = mixed(SchemeId::DcqcnLike, 1 << 20);
        let mut b = mixed(SchemeId::MatchRdma, 1 << 20);
        b.scheme = a.scheme;
        b.scenario_id.clone_from(&a.scenario_id);
        assert_eq!(a, b);
    }
}
