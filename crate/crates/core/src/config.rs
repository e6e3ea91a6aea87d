//! Scenario configuration. A scenario file is JSON; every field has a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::SchemeId;
use crate::engine::SimTime;
use crate::error::SimError;
use crate::fabric::{EcnConfig, TopologyConfig};
use crate::otn::OtnParams;
use crate::transport::DcqcnParams;
use crate::workload::WorkloadConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransportConfig {
    pub dcqcn: DcqcnParams,
    /// Unacknowledged bytes per queue pair; `null` disables the window.
    pub window_cap_bytes: Option<u64>,
    pub ack_coalesce: u32,
    pub cnp_min_interval_ns: u64,
    pub rto_min_ns: u64,
    pub rto_rtt_multiple: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            dcqcn: DcqcnParams::default(),
            window_cap_bytes: Some(1 << 20),
            ack_coalesce: 1,
            cnp_min_interval_ns: 50_000,
            rto_min_ns: 1_000_000,
            rto_rtt_multiple: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FabricConfig {
    pub ecn: EcnConfig,
    pub pfc_enabled: bool,
    pub pfc_xoff_bytes: u64,
    pub pfc_xon_bytes: u64,
    pub port_capacity_bytes: u64,
    /// Egress queue of each source-OTN long-haul link.
    pub long_haul_port_capacity_bytes: u64,
    /// The destination-OTN drain stalls while the access port it feeds holds
    /// more than this many data bytes.
    pub drain_handoff_bytes: u64,
}

impl Default for FabricConfig {
    fn default() -> Self {
        Self {
            ecn: EcnConfig::default(),
            pfc_enabled: true,
            pfc_xoff_bytes: 512 << 10,
            pfc_xon_bytes: 256 << 10,
            port_capacity_bytes: 8 << 20,
            long_haul_port_capacity_bytes: 64 << 20,
            drain_handoff_bytes: 64 << 10,
        }
    }
}

/// Piecewise-constant service rate of the destination-OTN buffer. With no
/// steps the drain runs at the aggregate OTN access capacity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrainProfile {
    /// `(from_ms, rate_gbps)`, ascending in time.
    pub steps: Vec<(f64, f64)>,
}

impl DrainProfile {
    pub fn constant(gbps: f64) -> Self {
        Self { steps: vec![(0.0, gbps)] }
    }

    pub fn step(initial_gbps: f64, at_ms: f64, after_gbps: f64) -> Self {
        Self {
            steps: vec![(0.0, initial_gbps), (at_ms, after_gbps)],
        }
    }

    /// Resolved `(time, bps)` change points starting at zero.
    pub fn resolve(&self, default_bps: f64) -> Vec<(SimTime, f64)> {
        let mut out = vec![(SimTime::ZERO, default_bps)];
        for &(ms, g) in &self.steps {
            let t = SimTime::from_secs_f64(ms * 1e-3);
            if t == SimTime::ZERO {
                out[0].1 = g * 1e9;
            } else {
                out.push((t, g * 1e9));
            }
        }
        out
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.steps.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(SimError::config("drain.steps must be strictly ascending in time"));
        }
        if self.steps.iter().any(|&(t, g)| t < 0.0 || !(g > 0.0)) {
            return Err(SimError::config("drain.steps need t >= 0 and a positive rate"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceConfig {
    pub enabled: bool,
    pub dir: Option<PathBuf>,
    pub buffer_sample_ns: u64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            dir: None,
            buffer_sample_ns: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub scheme: SchemeId,
    pub distance_km: f64,
    pub seed: u64,
    pub topology: TopologyConfig,
    pub fabric: FabricConfig,
    pub transport: TransportConfig,
    pub otn: OtnParams,
    pub workload: WorkloadConfig,
    pub drain: DrainProfile,
    pub trace: TraceConfig,
    /// Stop at this simulated time even if work remains.
    pub run_duration_ms: Option<f64>,
    pub watchdog_ms: f64,
    /// Drop every n-th DATA packet entering the destination-OTN buffer
    /// (fault injection for the safety suite). A given packet is dropped
    /// this way at most once.
    pub force_dest_drop_every: Option<u64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario_id: "scenario".into(),
            scheme: SchemeId::MatchRdma,
            distance_km: 1000.0,
            seed: 1,
            topology: TopologyConfig::default(),
            fabric: FabricConfig::default(),
            transport: TransportConfig::default(),
            otn: OtnParams::default(),
            workload: WorkloadConfig::default(),
            drain: DrainProfile::default(),
            trace: TraceConfig::default(),
            run_duration_ms: None,
            watchdog_ms: 10_000.0,
            force_dest_drop_every: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(1.0..=1000.0).contains(&self.distance_km) {
            return Err(SimError::config("distance_km must lie in [1, 1000]"));
        }
        self.workload.validate()?;
        self.otn.validate()?;
        self.drain.validate()?;
        let f = &self.fabric;
        if f.pfc_xon_bytes >= f.pfc_xoff_bytes || f.pfc_xoff_bytes > f.port_capacity_bytes {
            return Err(SimError::config("fabric PFC requires xon < xoff <= port capacity"));
        }
        f.ecn.validate(f.port_capacity_bytes)?;
        if self.transport.ack_coalesce == 0 {
            return Err(SimError::config("transport.ack_coalesce must be >= 1"));
        }
        if self.transport.window_cap_bytes == Some(0) {
            return Err(SimError::config("transport.window_cap_bytes must be positive or null"));
        }
        if self.watchdog_ms <= 0.0 {
            return Err(SimError::config("watchdog_ms must be positive"));
        }
        if self.force_dest_drop_every == Some(0) {
            return Err(SimError::config("force_dest_drop_every must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let c = ScenarioConfig::from_json("{}").unwrap();
        assert_eq!(c, ScenarioConfig::default());
    }

    #[test]
    fn json_round_trip() {
        let mut c = ScenarioConfig::default();
        c.scheme = SchemeId::ThemisLike;
        c.transport.window_cap_bytes = None;
        c.drain = DrainProfile::step(100.0, 20.0, 50.0);
        let back = ScenarioConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_override() {
        let c = ScenarioConfig::from_json(r#"{"scheme":"DCQCN_LIKE","distance_km":10,"otn":{"beta":0.25}}"#).unwrap();
        assert_eq!(c.scheme, SchemeId::DcqcnLike);
        assert_eq!(c.otn.beta, 0.25);
        assert_eq!(c.otn.headroom, 0.95);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ScenarioConfig::from_json(r#"{"distance_km":0.5}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"fabric":{"pfc_xon_bytes":600000}}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"scheme":"SWING"}"#).is_err());
    }

    #[test]
    fn drain_resolution() {
        let d = DrainProfile::step(100.0, 2.0, 40.0);
        assert_eq!(
            d.resolve(800e9),
            vec![(SimTime::ZERO, 100e9), (SimTime::from_millis(2), 40e9)]
        );
        assert_eq!(DrainProfile::default().resolve(800e9), vec![(SimTime::ZERO, 800e9)]);
    }
}
