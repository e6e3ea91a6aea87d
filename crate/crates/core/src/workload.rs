//! Synthetic training-style workload: compute gaps alternating with bursts
//! of concurrent inter-DC messages, plus Poisson intra-DC background.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::SimError;
use crate::fabric::{NodeId, Topology};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadConfig {
    pub msg_size_bytes: u64,
    pub concurrency: u32,
    pub iterations: u32,
    pub compute_ms: f64,
    pub jitter_pct: f64,
    pub intra_dc_load: f64,
    pub background_min_bytes: u64,
    pub background_max_bytes: u64,
    /// Background arrivals are generated over this horizon, independent of
    /// how long the inter-DC iterations take.
    pub background_horizon_ms: f64,
    /// Allow sizes and concurrency outside the swept ranges.
    pub allow_out_of_range: bool,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            msg_size_bytes: 8 << 20,
            concurrency: 4,
            iterations: 3,
            compute_ms: 5.0,
            jitter_pct: 0.0,
            intra_dc_load: 0.0,
            background_min_bytes: 4 << 10,
            background_max_bytes: 1 << 20,
            background_horizon_ms: 50.0,
            allow_out_of_range: false,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !self.allow_out_of_range {
            if !(1024..=8 << 20).contains(&self.msg_size_bytes) {
                return Err(SimError::config("workload.msg_size_bytes must lie in [1 KiB, 8 MiB]"));
            }
            if !(1..=64).contains(&self.concurrency) {
                return Err(SimError::config("workload.concurrency must lie in [1, 64]"));
            }
        }
        if self.iterations > 0 && (self.msg_size_bytes == 0 || self.concurrency == 0) {
            return Err(SimError::config("workload messages need a size and concurrency >= 1"));
        }
        if !(0.0..=50.0).contains(&self.jitter_pct) {
            return Err(SimError::config("workload.jitter_pct must lie in [0, 50]"));
        }
        if !(0.0..1.0).contains(&self.intra_dc_load) {
            return Err(SimError::config("workload.intra_dc_load must lie in [0, 1)"));
        }
        if self.compute_ms < 0.0 || self.background_horizon_ms < 0.0 {
            return Err(SimError::config("workload durations must be non-negative"));
        }
        if self.background_min_bytes == 0 || self.background_min_bytes > self.background_max_bytes {
            return Err(SimError::config("background size range must satisfy 0 < min <= max"));
        }
        Ok(())
    }

    fn jitter_factor<R: Rng>(&self, rng: &mut R) -> f64 {
        let j = self.jitter_pct / 100.0;
        if j == 0.0 {
            1.0
        } else {
            1.0 + rng.gen_range(-j..=j)
        }
    }

    /// Mean of the log-uniform background size distribution.
    pub fn background_mean_bytes(&self) -> f64 {
        let (a, b) = (self.background_min_bytes as f64, self.background_max_bytes as f64);
        if a == b {
            a
        } else {
            (b - a) / (b / a).ln()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedMessage {
    pub src: NodeId,
    pub dst: NodeId,
    pub size: u64,
    /// Concurrency slot; a slot maps to one persistent queue pair.
    pub slot: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationPlan {
    /// Idle time between the previous barrier and this iteration's issue.
    pub compute_gap: SimTime,
    pub messages: Vec<PlannedMessage>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundMessage {
    pub at: SimTime,
    pub src: NodeId,
    pub dst: NodeId,
    pub size: u64,
}

/// Independent seeded streams for the workload, derived from the scenario seed.
pub fn stream(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

const SCHEDULE_STREAM: u64 = 1;
const BACKGROUND_STREAM: u64 = 2;

/// Iterations issued from DC 0 to DC 1. Issue times are relative to the
/// barrier that closes the previous iteration.
pub fn generate_schedule(cfg: &WorkloadConfig, topo: &Topology, seed: u64) -> Vec<IterationPlan> {
    let mut rng = stream(seed, SCHEDULE_STREAM);
    let srcs = topo.servers_round_robin(0);
    let dsts = topo.servers_round_robin(1);
    (0..cfg.iterations)
        .map(|_| {
            let gap_ns = cfg.compute_ms * 1e6 * cfg.jitter_factor(&mut rng);
            let messages = (0..cfg.concurrency)
                .map(|k| {
                    let size = ((cfg.msg_size_bytes as f64 * cfg.jitter_factor(&mut rng)).round() as u64).max(1);
                    PlannedMessage {
                        src: srcs[k as usize % srcs.len()],
                        dst: dsts[k as usize % dsts.len()],
                        size,
                        slot: k,
                    }
                })
                .collect();
            IterationPlan {
                compute_gap: SimTime::from_nanos(gap_ns.round().max(0.0) as u64),
                messages,
            }
        })
        .collect()
}

/// Poisson intra-DC background in both DCs, sized so that the offered load
/// is `intra_dc_load` of each DC's aggregate server-link capacity.
pub fn generate_background(cfg: &WorkloadConfig, topo: &Topology, seed: u64) -> Vec<BackgroundMessage> {
    if cfg.intra_dc_load <= 0.0 {
        return Vec::new();
    }
    let mut rng = stream(seed, BACKGROUND_STREAM);
    let horizon = cfg.background_horizon_ms * 1e6;
    let (ln_a, ln_b) = ((cfg.background_min_bytes as f64).ln(), (cfg.background_max_bytes as f64).ln());
    let mut out = Vec::new();
    for dc in 0..2u8 {
        let servers = topo.servers(dc);
        if servers.len() < 2 {
            continue;
        }
        let capacity = servers.len() as f64 * topo.host_rate_bps() as f64;
        let lambda_per_ns = cfg.intra_dc_load * capacity / (8.0 * cfg.background_mean_bytes()) * 1e-9;
        let mut t = 0.0f64;
        loop {
            let u: f64 = rng.gen();
            t += -(1.0 - u).ln() / lambda_per_ns;
            if t >= horizon {
                break;
            }
            let src_i = rng.gen_range(0..servers.len());
            let mut dst_i = rng.gen_range(0..servers.len() - 1);
            if dst_i >= src_i {
                dst_i += 1;
            }
            let size = if ln_a == ln_b {
                cfg.background_min_bytes
            } else {
                rng.gen_range(ln_a..ln_b).exp().round() as u64
            };
            out.push(BackgroundMessage {
                at: SimTime::from_nanos(t as u64),
                src: servers[src_i],
                dst: servers[dst_i],
                size: size.clamp(cfg.background_min_bytes, cfg.background_max_bytes),
            });
        }
    }
    out.sort_by_key(|m| (m.at, m.src, m.dst));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::TopologyConfig;

    fn topo() -> Topology {
        Topology::build(&TopologyConfig::default(), 100.0).unwrap()
    }

    #[test]
    fn serialized_single_message_iterations() {
        let cfg = WorkloadConfig {
            concurrency: 1,
            iterations: 3,
            ..WorkloadConfig::default()
        };
        let s = generate_schedule(&cfg, &topo(), 1);
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|it| it.messages.len() == 1));
        assert!(s.iter().all(|it| it.compute_gap == SimTime::from_millis(5)));
    }

    #[test]
    fn concurrent_messages_cross_dcs() {
        let t = topo();
        let cfg = WorkloadConfig {
            concurrency: 64,
            iterations: 1,
            ..WorkloadConfig::default()
        };
        let s = generate_schedule(&cfg, &t, 1);
        assert_eq!(s[0].messages.len(), 64);
        for m in &s[0].messages {
            assert_eq!(t.node(m.src).dc(), 0);
            assert_eq!(t.node(m.dst).dc(), 1);
        }
    }

    #[test]
    fn jittered_sizes() {
        let cfg = WorkloadConfig {
            msg_size_bytes: 1 << 20,
            concurrency: 64,
            iterations: 157,
            jitter_pct: 10.0,
            ..WorkloadConfig::default()
        };
        let s = generate_schedule(&cfg, &topo(), 9);
        let sizes: Vec<f64> = s.iter().flat_map(|i| i.messages.iter().map(|m| m.size as f64)).collect();
        assert!(sizes.len() >= 10_000);
        let m = (1u64 << 20) as f64;
        assert!(sizes.iter().all(|&x| x >= 0.9 * m - 1.0 && x <= 1.1 * m + 1.0));
        let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
        assert!((mean / m - 1.0).abs() < 0.01);
    }

    #[test]
    fn empty_background_at_zero_load() {
        assert!(generate_background(&WorkloadConfig::default(), &topo(), 1).is_empty());
    }

    #[test]
    fn background_offered_load() {
        let t = topo();
        let cfg = WorkloadConfig {
            intra_dc_load: 0.5,
            background_horizon_ms: 100.0,
            ..WorkloadConfig::default()
        };
        let bg = generate_background(&cfg, &t, 3);
        for dc in 0..2u8 {
            let bytes: u64 = bg.iter().filter(|m| t.node(m.src).dc() == dc).map(|m| m.size).sum();
            let per_edge = bytes as f64 * 8.0 / 0.1 / t.servers(dc).len() as f64;
            assert!((per_edge / 50e9 - 1.0).abs() < 0.05, "dc {dc}: {per_edge}");
        }
        assert!(bg.iter().all(|m| m.src != m.dst && t.node(m.src).dc() == t.node(m.dst).dc()));
        assert_eq!(bg, generate_background(&cfg, &t, 3));
    }

    #[test]
    fn background_mean_formula() {
        let cfg = WorkloadConfig::default();
        let (a, b) = (4096.0f64, 1048576.0f64);
        assert!((cfg.background_mean_bytes() - (b - a) / (b / a).ln()).abs() < 1e-9);
    }

    #[test]
    fn validation() {
        let bad = WorkloadConfig {
            jitter_pct: 60.0,
            ..WorkloadConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = WorkloadConfig {
            concurrency: 65,
            ..WorkloadConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(WorkloadConfig::default().validate().is_ok());
    }
}
