//! The four compared schemes, expressed as switches on the shared machinery.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SchemeId {
    #[serde(rename = "DCQCN_LIKE")]
    DcqcnLike,
    #[serde(rename = "PSEUDO_ACK")]
    PseudoAck,
    #[serde(rename = "THEMIS_LIKE")]
    ThemisLike,
    #[serde(rename = "MATCH_RDMA")]
    MatchRdma,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [SchemeId::DcqcnLike, SchemeId::PseudoAck, SchemeId::ThemisLike, SchemeId::MatchRdma];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::DcqcnLike => "DCQCN_LIKE",
            SchemeId::PseudoAck => "PSEUDO_ACK",
            SchemeId::ThemisLike => "THEMIS_LIKE",
            SchemeId::MatchRdma => "MATCH_RDMA",
        }
    }

    pub fn profile(self) -> SchemeProfile {
        let passive = SchemeProfile {
            relay: false,
            gated: false,
            estimator: false,
            proxy_cnp: false,
            absorb_dest_cnp: false,
            rtt_scaled_cc: false,
        };
        match self {
            SchemeId::DcqcnLike => passive,
            SchemeId::ThemisLike => SchemeProfile {
                rtt_scaled_cc: true,
                ..passive
            },
            SchemeId::PseudoAck => SchemeProfile {
                relay: true,
                ..passive
            },
            SchemeId::MatchRdma => SchemeProfile {
                relay: true,
                gated: true,
                estimator: true,
                proxy_cnp: true,
                absorb_dest_cnp: true,
                rtt_scaled_cc: false,
            },
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        match norm.as_str() {
            "DCQCN_LIKE" | "DCQCN" => Ok(SchemeId::DcqcnLike),
            "PSEUDO_ACK" | "NTT" => Ok(SchemeId::PseudoAck),
            "THEMIS_LIKE" | "THEMIS" => Ok(SchemeId::ThemisLike),
            "MATCH_RDMA" | "MATCHRDMA" => Ok(SchemeId::MatchRdma),
            _ => Err(SimError::config(format!("unknown scheme '{s}'"))),
        }
    }
}

/// OTN-edge and sender-CC behavior of a scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SchemeProfile {
    /// Source OTN tracks connections, pseudo-ACKs and owns retransmission.
    pub relay: bool,
    /// Pseudo-ACKs wait for the rate-budget gate.
    pub gated: bool,
    /// Destination OTN estimates and signals budgets.
    pub estimator: bool,
    /// Source OTN turns local congestion into CNPs.
    pub proxy_cnp: bool,
    /// Destination OTN consumes CNPs from its DC instead of forwarding them.
    pub absorb_dest_cnp: bool,
    /// Inter-DC senders scale DCQCN increase/gain by their RTT ratio.
    pub rtt_scaled_cc: bool,
}

impl SchemeProfile {
    pub fn uses_control_channel(&self) -> bool {
        self.estimator
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in SchemeId::ALL {
            assert_eq!(s.as_str().parse::<SchemeId>().unwrap(), s);
            let j = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<SchemeId>(&j).unwrap(), s);
        }
        assert!("swing".parse::<SchemeId>().is_err());
    }

    #[test]
    fn baseline_profiles() {
        let d = SchemeId::DcqcnLike.profile();
        assert!(!d.relay && !d.gated && !d.uses_control_channel());
        let p = SchemeId::PseudoAck.profile();
        assert!(p.relay && !p.gated && !p.proxy_cnp && !p.uses_control_channel());
        let t = SchemeId::ThemisLike.profile();
        assert!(!t.relay && t.rtt_scaled_cc);
        let m = SchemeId::MatchRdma.profile();
        assert!(m.relay && m.gated && m.estimator && m.proxy_cnp && m.absorb_dest_cnp);
    }
}
