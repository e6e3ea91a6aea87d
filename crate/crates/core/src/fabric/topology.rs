//! Dual-DC leaf-spine fabric joined by an OTN edge pair.
//!
//! Each DC is `leaves x spines` with `servers_per_leaf` hosts under every
//! leaf. Every spine connects to the DC's single OTN edge node, and the two
//! edges are joined by `otn_parallel_links` long-haul links per direction.
//! Routing is static and per-connection: the spine and the long-haul member
//! link are chosen by hashing the connection id, so a flow never reorders.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::SimTime;
use crate::error::SimError;
use crate::fabric::link::{long_haul_delay, LinkConfig};
use crate::transport::ConnId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Server { dc: u8, leaf: u16, slot: u16 },
    Leaf { dc: u8, index: u16 },
    Spine { dc: u8, index: u16 },
    OtnEdge { dc: u8 },
}

impl NodeKind {
    pub fn dc(self) -> u8 {
        match self {
            NodeKind::Server { dc, .. }
            | NodeKind::Leaf { dc, .. }
            | NodeKind::Spine { dc, .. }
            | NodeKind::OtnEdge { dc } => dc,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkClass {
    /// Server <-> leaf.
    Host,
    /// Leaf <-> spine.
    Fabric,
    /// Spine <-> OTN edge.
    OtnAccess,
    /// OTN edge <-> OTN edge.
    LongHaul,
}

#[derive(Clone, Copy, Debug)]
pub struct Link {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub cfg: LinkConfig,
    pub class: LinkClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyConfig {
    pub leaves: u16,
    pub spines: u16,
    pub servers_per_leaf: u16,
    pub otn_parallel_links: u16,
    pub host_rate_gbps: f64,
    pub fabric_rate_gbps: f64,
    pub otn_access_rate_gbps: f64,
    pub long_haul_rate_gbps: f64,
    pub intra_dc_delay_ns: u64,
    pub mtu: u32,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            leaves: 2,
            spines: 2,
            servers_per_leaf: 4,
            otn_parallel_links: 16,
            host_rate_gbps: 100.0,
            fabric_rate_gbps: 100.0,
            otn_access_rate_gbps: 400.0,
            long_haul_rate_gbps: 100.0,
            intra_dc_delay_ns: 1_000,
            mtu: 4096,
        }
    }
}

fn gbps(x: f64) -> u64 {
    (x * 1e9).round() as u64
}

pub struct Topology {
    pub cfg: TopologyConfig,
    pub distance_km: f64,
    nodes: Vec<NodeKind>,
    links: Vec<Link>,
    servers: [Vec<NodeId>; 2],
    leaves: [Vec<NodeId>; 2],
    spines: [Vec<NodeId>; 2],
    otn: [NodeId; 2],
    server_up: Vec<Option<LinkId>>,
    leaf_down: Vec<Vec<LinkId>>,
    leaf_up: Vec<Vec<LinkId>>,
    spine_down: Vec<Vec<LinkId>>,
    spine_to_otn: Vec<Option<LinkId>>,
    otn_to_spine: [Vec<LinkId>; 2],
    long_haul: [Vec<LinkId>; 2],
    /// Per-connection choice at a multi-path hop, fixed at connection setup.
    pins: BTreeMap<(ConnId, NodeId), u16>,
    placed: Vec<u32>,
}

/// splitmix64 finalizer; used for static, deterministic ECMP choices.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn pick(conn: ConnId, salt: u64, n: usize) -> usize {
    (mix64(conn.0 as u64 ^ (salt << 32)) % n as u64) as usize
}

impl Topology {
    pub fn build(cfg: &TopologyConfig, distance_km: f64) -> Result<Self, SimError> {
        if !(1.0..=1000.0).contains(&distance_km) {
            return Err(SimError::config(format!(
                "distance_km must lie in [1, 1000], got {distance_km}"
            )));
        }
        if cfg.leaves == 0 || cfg.spines == 0 || cfg.servers_per_leaf == 0 || cfg.otn_parallel_links == 0 {
            return Err(SimError::config("topology counts must be at least 1"));
        }
        for r in [
            cfg.host_rate_gbps,
            cfg.fabric_rate_gbps,
            cfg.otn_access_rate_gbps,
            cfg.long_haul_rate_gbps,
        ] {
            if !(r > 0.0) {
                return Err(SimError::config("link rates must be positive"));
            }
        }
        let intra = SimTime::from_nanos(cfg.intra_dc_delay_ns);
        let host = LinkConfig::new(gbps(cfg.host_rate_gbps), intra, cfg.mtu)?;
        let fabric = LinkConfig::new(gbps(cfg.fabric_rate_gbps), intra, cfg.mtu)?;
        let access = LinkConfig::new(gbps(cfg.otn_access_rate_gbps), intra, cfg.mtu)?;
        let haul = LinkConfig::new(gbps(cfg.long_haul_rate_gbps), long_haul_delay(distance_km), cfg.mtu)?;

        let mut t = Topology {
            cfg: cfg.clone(),
            distance_km,
            nodes: Vec::new(),
            links: Vec::new(),
            servers: [Vec::new(), Vec::new()],
            leaves: [Vec::new(), Vec::new()],
            spines: [Vec::new(), Vec::new()],
            otn: [NodeId(0), NodeId(0)],
            server_up: Vec::new(),
            leaf_down: Vec::new(),
            leaf_up: Vec::new(),
            spine_down: Vec::new(),
            spine_to_otn: Vec::new(),
            otn_to_spine: [Vec::new(), Vec::new()],
            long_haul: [Vec::new(), Vec::new()],
            pins: BTreeMap::new(),
            placed: Vec::new(),
        };

        for dc in 0..2u8 {
            let d = dc as usize;
            for l in 0..cfg.leaves {
                let leaf = t.add_node(NodeKind::Leaf { dc, index: l });
                t.leaves[d].push(leaf);
                for s in 0..cfg.servers_per_leaf {
                    let srv = t.add_node(NodeKind::Server { dc, leaf: l, slot: s });
                    t.servers[d].push(srv);
                    let up = t.add_link(srv, leaf, host, LinkClass::Host);
                    let down = t.add_link(leaf, srv, host, LinkClass::Host);
                    t.server_up[srv.0 as usize] = Some(up);
                    t.leaf_down[leaf.0 as usize].push(down);
                }
            }
            for s in 0..cfg.spines {
                let spine = t.add_node(NodeKind::Spine { dc, index: s });
                t.spines[d].push(spine);
            }
            for li in 0..cfg.leaves as usize {
                for si in 0..cfg.spines as usize {
                    let leaf = t.leaves[d][li];
                    let spine = t.spines[d][si];
                    let up = t.add_link(leaf, spine, fabric, LinkClass::Fabric);
                    let down = t.add_link(spine, leaf, fabric, LinkClass::Fabric);
                    t.leaf_up[leaf.0 as usize].push(up);
                    t.spine_down[spine.0 as usize].push(down);
                }
            }
            let edge = t.add_node(NodeKind::OtnEdge { dc });
            t.otn[d] = edge;
            for si in 0..cfg.spines as usize {
                let spine = t.spines[d][si];
                let up = t.add_link(spine, edge, access, LinkClass::OtnAccess);
                let down = t.add_link(edge, spine, access, LinkClass::OtnAccess);
                t.spine_to_otn[spine.0 as usize] = Some(up);
                t.otn_to_spine[d].push(down);
            }
        }
        for _ in 0..cfg.otn_parallel_links {
            let ab = t.add_link(t.otn[0], t.otn[1], haul, LinkClass::LongHaul);
            let ba = t.add_link(t.otn[1], t.otn[0], haul, LinkClass::LongHaul);
            t.long_haul[0].push(ab);
            t.long_haul[1].push(ba);
        }
        Ok(t)
    }

    fn add_node(&mut self, kind: NodeKind) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(kind);
        self.server_up.push(None);
        self.leaf_down.push(Vec::new());
        self.leaf_up.push(Vec::new());
        self.spine_down.push(Vec::new());
        self.spine_to_otn.push(None);
        id
    }

    fn add_link(&mut self, from: NodeId, to: NodeId, cfg: LinkConfig, class: LinkClass) -> LinkId {
        let id = LinkId(self.links.len() as u32);
        self.links.push(Link {
            id,
            from,
            to,
            cfg,
            class,
        });
        id
    }

    pub fn node(&self, id: NodeId) -> NodeKind {
        self.nodes[id.0 as usize]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0 as usize]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn servers(&self, dc: u8) -> &[NodeId] {
        &self.servers[dc as usize]
    }

    /// Servers of `dc` ordered so consecutive indices alternate between leaves.
    pub fn servers_round_robin(&self, dc: u8) -> Vec<NodeId> {
        let per = self.cfg.servers_per_leaf as usize;
        let leaves = self.cfg.leaves as usize;
        let all = &self.servers[dc as usize];
        (0..per)
            .flat_map(|s| (0..leaves).map(move |l| l * per + s))
            .map(|i| all[i])
            .collect()
    }

    pub fn leaves(&self, dc: u8) -> &[NodeId] {
        &self.leaves[dc as usize]
    }

    pub fn spines(&self, dc: u8) -> &[NodeId] {
        &self.spines[dc as usize]
    }

    pub fn otn_edge(&self, dc: u8) -> NodeId {
        self.otn[dc as usize]
    }

    pub fn otn_edges(&self) -> usize {
        self.nodes.iter().filter(|k| matches!(k, NodeKind::OtnEdge { .. })).count()
    }

    /// Long-haul links leaving the OTN edge of `from_dc`.
    pub fn long_haul_links(&self, from_dc: u8) -> &[LinkId] {
        &self.long_haul[from_dc as usize]
    }

    pub fn otn_access_links(&self, dc: u8) -> &[LinkId] {
        &self.otn_to_spine[dc as usize]
    }

    pub fn server_uplink(&self, srv: NodeId) -> LinkId {
        self.server_up[srv.0 as usize].expect("not a server")
    }

    pub fn long_haul_delay(&self) -> SimTime {
        self.link(self.long_haul[0][0]).cfg.prop_delay
    }

    pub fn aggregate_otn_capacity_bps(&self) -> f64 {
        self.cfg.otn_parallel_links as f64 * gbps(self.cfg.long_haul_rate_gbps) as f64
    }

    pub fn host_rate_bps(&self) -> u64 {
        gbps(self.cfg.host_rate_gbps)
    }

    /// Static next hop from `at` toward server `dst` for connection `conn`.
    pub fn next_hop(&self, at: NodeId, dst: NodeId, conn: ConnId) -> LinkId {
        let NodeKind::Server { dc: ddc, leaf: dleaf, slot: dslot } = self.node(dst) else {
            panic!("routing destination {dst:?} is not a server");
        };
        match self.node(at) {
            NodeKind::Server { .. } => self.server_uplink(at),
            NodeKind::Leaf { dc, index } => {
                if dc == ddc && index == dleaf {
                    self.leaf_down[at.0 as usize][dslot as usize]
                } else {
                    let ups = &self.leaf_up[at.0 as usize];
                    ups[self.choice(conn, at, 1, ups.len())]
                }
            }
            NodeKind::Spine { dc, .. } => {
                if dc == ddc {
                    self.spine_down[at.0 as usize][dleaf as usize]
                } else {
                    self.spine_to_otn[at.0 as usize].expect("spine without OTN uplink")
                }
            }
            NodeKind::OtnEdge { dc } => {
                if dc == ddc {
                    let downs = &self.otn_to_spine[dc as usize];
                    downs[self.choice(conn, at, 2, downs.len())]
                } else {
                    let lh = &self.long_haul[dc as usize];
                    lh[pick(conn, 3, lh.len())]
                }
            }
        }
    }

    fn choice(&self, conn: ConnId, at: NodeId, salt: u64, n: usize) -> usize {
        match self.pins.get(&(conn, at)) {
            Some(&i) => i as usize,
            None => pick(conn, salt, n),
        }
    }

    /// Fixes the spine choices of `conn` in both directions, picking the
    /// least-loaded option among connections placed so far (ties by hash).
    /// Long-haul member links stay hashed. Unplaced connections fall back
    /// to hashing everywhere.
    pub fn place_connection(&mut self, conn: ConnId, a: NodeId, b: NodeId) {
        if self.placed.is_empty() {
            self.placed = vec![0; self.links.len()];
        }
        for (src, dst) in [(a, b), (b, a)] {
            let mut at = src;
            let mut hops = 0;
            while at != dst {
                let options: Vec<LinkId> = match self.node(at) {
                    NodeKind::Leaf { dc, index } => {
                        let NodeKind::Server { dc: ddc, leaf, .. } = self.node(dst) else { unreachable!() };
                        if dc == ddc && index == leaf {
                            Vec::new()
                        } else {
                            self.leaf_up[at.0 as usize].clone()
                        }
                    }
                    NodeKind::OtnEdge { dc } if dc == self.node(dst).dc() => self.otn_to_spine[dc as usize].clone(),
                    _ => Vec::new(),
                };
                if options.len() > 1 && !self.pins.contains_key(&(conn, at)) {
                    // Cost of an option: its own load plus the load of the
                    // next hop it commits to.
                    let cost = |t: &Topology, l: LinkId| {
                        let next = t.next_hop(t.link(l).to, dst, conn);
                        t.placed[l.0 as usize] + t.placed[next.0 as usize]
                    };
                    let start = pick(conn, 4, options.len());
                    let best = (0..options.len())
                        .map(|k| (start + k) % options.len())
                        .min_by_key(|&i| cost(self, options[i]))
                        .expect("non-empty options");
                    self.pins.insert((conn, at), best as u16);
                }
                let l = self.next_hop(at, dst, conn);
                self.placed[l.0 as usize] += 1;
                at = self.link(l).to;
                hops += 1;
                assert!(hops < 16, "routing loop from {src:?} to {dst:?}");
            }
        }
    }

    pub fn path(&self, src: NodeId, dst: NodeId, conn: ConnId) -> Vec<LinkId> {
        let mut out = Vec::new();
        let mut at = src;
        while at != dst {
            let l = self.next_hop(at, dst, conn);
            out.push(l);
            at = self.link(l).to;
            assert!(out.len() < 16, "routing loop from {src:?} to {dst:?}");
        }
        out
    }

    /// Unloaded round-trip time: a full-size DATA packet out, a header-only ACK back.
    pub fn base_rtt(&self, src: NodeId, dst: NodeId, conn: ConnId, data_bytes: u32, ack_bytes: u32) -> SimTime {
        let fwd = self.path(src, dst, conn);
        let rev = self.path(dst, src, conn);
        let one = |p: &[LinkId], bytes: u32| -> f64 {
            p.iter()
                .map(|&l| {
                    let c = &self.link(l).cfg;
                    c.prop_delay.as_nanos() as f64 + c.serialization_ns(bytes)
                })
                .sum()
        };
        SimTime::from_nanos((one(&fwd, data_bytes) + one(&rev, ack_bytes)).round() as u64)
    }

    pub fn is_inter_dc(&self, src: NodeId, dst: NodeId) -> bool {
        self.node(src).dc() != self.node(dst).dc()
    }
}
