//! The packet-level world: hosts, switches, both OTN edges and the inter-OTN
//! control subchannel, all driven by one event queue.
//!
//! Data flows from DC 0 to DC 1. The OTN edge of DC 0 is the source side
//! (relay, gate) and the edge of DC 1 is the destination side (buffer,
//! drain, estimator). Intra-DC background runs in both DCs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand_chacha::ChaCha8Rng;

use crate::baselines::SchemeProfile;
use crate::config::ScenarioConfig;
use crate::engine::{EventQueue, SimTime};
use crate::error::{Result, SimError};
use crate::fabric::{
    Enqueue, LinkClass, LinkId, NodeId, NodeKind, PfcFrame, PfcGate, PortQueue, QueueConfig, Queued, Serializer,
    Topology,
};
use crate::otn::{
    BudgetRegister, ControlKind, ControlMessage, DataVerdict, DestEstimator, InstallOutcome, RateBudget, Release,
    SlotObservation, SlotThresholds, SourceOtn, SourceParams, TokenBucket, CONTROL_MSG_BYTES,
};
use crate::transport::{
    ConnId, DcqcnState, FlowClass, HostControl, MsgId, PacketKind, QueuePairState, ReceiverState, RocePacket, Tick,
    HEADER_BYTES,
};
use crate::workload::{self, BackgroundMessage, IterationPlan};

const ECN_STREAM: u64 = 3;
const TOWARD_DEST: usize = 0;
const TOWARD_SOURCE: usize = 1;

#[derive(Clone, Debug)]
enum Ev {
    Arrive { link: LinkId, pkt: RocePacket },
    PortFree(LinkId),
    Pfc { link: LinkId, pause: bool },
    HostWake(NodeId),
    AlphaTimer(usize),
    RateTimer(usize),
    Rto(usize),
    Iteration(usize),
    Background(usize),
    DrainDone { pkt: RocePacket, out: LinkId },
    DrainRate(usize),
    Gate,
    Slot,
    Control { lane: usize, msg: ControlMessage },
    Stale(u64),
    RelayCheck,
    Sample,
    Watchdog,
}

struct Port {
    q: PortQueue,
    busy: bool,
    ser: Serializer,
}

/// Per-ingress-link byte counter at the receiving node, driving PFC toward
/// the upstream port.
struct Ingress {
    bytes: u64,
    gate: Option<PfcGate>,
}

struct Host {
    qps: Vec<usize>,
    rr: usize,
    wake_at: Option<SimTime>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum QpKey {
    Slot(u32),
    Pair(NodeId, NodeId),
}

struct Qp {
    st: QueuePairState,
    rx: ReceiverState,
    class: FlowClass,
    /// Tracked end to end by the source-OTN relay.
    relayed: bool,
    alpha_armed: bool,
    rate_armed: bool,
    rto_deadline: Option<SimTime>,
    rto_pending: bool,
    /// `(end_psn, message index)` not yet fully delivered at the receiver.
    undelivered: VecDeque<(u32, usize)>,
    submitted_bytes: u64,
}

/// One message of the run, in issue order.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageRecord {
    pub size: u64,
    pub class: FlowClass,
    pub iteration: Option<usize>,
    pub issued_at: SimTime,
    /// Last payload byte delivered in order at the receiver.
    pub delivered_at: Option<SimTime>,
    /// Sender learned of end-to-end delivery.
    pub completed_at: Option<SimTime>,
}

impl MessageRecord {
    pub fn fct(&self) -> Option<SimTime> {
        self.completed_at.map(|c| c - self.issued_at)
    }
}

struct DestOtn {
    node: NodeId,
    buf: PortQueue,
    rates: Vec<(SimTime, f64)>,
    rate_idx: usize,
    busy: bool,
    residue_ns: f64,
    in_service: u64,
    idle_since: Option<SimTime>,
    spare_bits: f64,
    occ_integral: f64,
    last_change: SimTime,
    slot_peak: u64,
    arrivals: u64,
    forced_drops: u64,
    /// `(conn, psn)` already hit by a forced drop. A packet is forced-dropped
    /// at most once, otherwise a retransmission burst whose length divides
    /// the drop period loses the same packet on every attempt.
    force_dropped: BTreeSet<(ConnId, u32)>,
}

impl DestOtn {
    fn rate(&self) -> f64 {
        self.rates[self.rate_idx].1
    }

    fn account(&mut self, now: SimTime) {
        self.occ_integral += self.buf.occupancy() as f64 * (now - self.last_change).as_nanos() as f64;
        self.last_change = now;
    }

    fn flush_idle(&mut self, now: SimTime, still_idle: bool) {
        if let Some(s) = self.idle_since.take() {
            self.spare_bits += (now - s).as_nanos() as f64 * 1e-9 * self.rate();
            if still_idle {
                self.idle_since = Some(now);
            }
        }
    }
}

/// DATA byte accounting across the whole run, in wire bytes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ByteLedger {
    /// Host transmissions plus relay retransmissions.
    pub injected: u64,
    /// Arrivals at receiving hosts, duplicates included.
    pub absorbed: u64,
    /// Queue drops, forced drops and relay duplicate discards.
    pub dropped: u64,
    /// Still queued, staged, in service or on a wire at the end.
    pub in_network: u64,
}

impl ByteLedger {
    pub fn balanced(&self) -> bool {
        self.injected == self.absorbed + self.dropped + self.in_network
    }
}

/// Raw results of one run; `metrics` turns this into a CSV record.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub end: SimTime,
    pub messages: Vec<MessageRecord>,
    /// In-order payload delivered for inter-DC messages.
    pub inter_delivered_bytes: u64,
    pub intra_delivered_bytes: u64,
    /// Union of `[issue, last delivery]` over iterations.
    pub active_time: SimTime,
    pub peak_buf: u64,
    pub mean_buf: f64,
    pub pause_ratio: f64,
    /// Same ratio recomputed from the per-port pause/resume logs.
    pub pause_ratio_from_log: f64,
    pub measured_ports: usize,
    pub drops: u64,
    pub control_msgs: u64,
    /// `(install time, epoch, rate)` at the source OTN.
    pub budget_history: Vec<(SimTime, u64, f64)>,
    pub slot_observations: Vec<SlotObservation>,
    /// Exact destination-buffer peak per slot, stamped at the slot end.
    pub slot_peaks: Vec<(SimTime, u64)>,
    pub buffer_trace: Vec<(SimTime, u64)>,
    pub ledger: ByteLedger,
    pub one_way_delay: SimTime,
    pub events: u64,
    pub sender_retransmits: u64,
    pub relay_retransmits: u64,
    pub proxy_cnps: u64,
    pub cnps_absorbed: u64,
    pub peak_staged: u64,
    pub pfc_pauses: u64,
}

pub struct World {
    cfg: ScenarioConfig,
    prof: SchemeProfile,
    topo: Topology,
    q: EventQueue<Ev>,
    rng: ChaCha8Rng,
    ports: Vec<Port>,
    ingress: Vec<Ingress>,
    hosts: BTreeMap<NodeId, Host>,
    qps: Vec<Qp>,
    qp_index: BTreeMap<QpKey, usize>,
    msgs: Vec<MessageRecord>,
    plan: Vec<IterationPlan>,
    iter_outstanding: Vec<usize>,
    iter_issue: Vec<SimTime>,
    iter_last_delivery: Vec<Option<SimTime>>,
    iterations_done: usize,
    background: Vec<BackgroundMessage>,
    bg_issued: usize,
    bg_outstanding: usize,
    src: Option<SourceOtn>,
    src_node: NodeId,
    gate_wake: Option<SimTime>,
    dest: DestOtn,
    est: Option<DestEstimator>,
    register: Option<BudgetRegister>,
    lane_free: [SimTime; 2],
    control_msgs: u64,
    measured_d: Option<SimTime>,
    themis_ref_rtt: SimTime,
    relay_check_every: SimTime,
    ledger: ByteLedger,
    wire_bytes: u64,
    drops: u64,
    pfc_pauses: u64,
    inter_delivered: u64,
    intra_delivered: u64,
    slot_peaks: Vec<(SimTime, u64)>,
    buffer_trace: Vec<(SimTime, u64)>,
    last_progress: SimTime,
    finished_at: Option<SimTime>,
}

impl World {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let topo = Topology::build(&cfg.topology, cfg.distance_km)?;
        let prof = cfg.scheme.profile();
        let f = &cfg.fabric;
        let mut ports = Vec::with_capacity(topo.links().len());
        let mut ingress = Vec::with_capacity(topo.links().len());
        for l in topo.links() {
            let from_server = matches!(topo.node(l.from), NodeKind::Server { .. });
            let qc = QueueConfig {
                capacity_bytes: if l.class == LinkClass::LongHaul {
                    f.long_haul_port_capacity_bytes
                } else {
                    f.port_capacity_bytes
                },
                ecn: f.ecn,
                // NIC queues and OTN transponders do not mark.
                ecn_enabled: !from_server && l.class != LinkClass::LongHaul,
            };
            ports.push(Port {
                q: PortQueue::new(&qc),
                busy: false,
                ser: Serializer::default(),
            });
            let gate = match (topo.node(l.to), l.class) {
                _ if !f.pfc_enabled => None,
                (NodeKind::Leaf { .. } | NodeKind::Spine { .. }, _) => Some(PfcGate::new(f.pfc_xoff_bytes, f.pfc_xon_bytes)?),
                (NodeKind::OtnEdge { .. }, LinkClass::OtnAccess) => {
                    Some(PfcGate::new(cfg.otn.staging_xoff_bytes, cfg.otn.staging_xon_bytes)?)
                }
                _ => None,
            };
            ingress.push(Ingress { bytes: 0, gate });
        }

        let src_node = topo.otn_edge(0);
        let dst_node = topo.otn_edge(1);
        let d = topo.long_haul_delay();
        let p = &cfg.otn;
        let valid_for = SimTime::from_nanos(p.valid_for_ns);
        let t_slot = SimTime::from_nanos(p.t_slot_ns);

        let srv0 = topo.servers_round_robin(0);
        let mtu = cfg.topology.mtu;
        let base_intra = |a: NodeId, b: NodeId| topo.base_rtt(a, b, ConnId(0), mtu + HEADER_BYTES, HEADER_BYTES);
        let themis_ref_rtt = if srv0.len() >= 2 {
            base_intra(srv0[0], srv0[1])
        } else {
            SimTime::from_micros(10)
        };
        let srv1 = topo.servers_round_robin(1);
        let dest_intra = if srv1.len() >= 2 {
            base_intra(srv1[0], srv1[1])
        } else {
            themis_ref_rtt
        };

        let src = prof.relay.then(|| {
            let bucket = if prof.gated {
                TokenBucket::new(p.rate_floor_bps, p.bucket_burst_bytes)
            } else {
                TokenBucket::unlimited()
            };
            let rto = SimTime::from_nanos((3.0 * (d + d + themis_ref_rtt).as_nanos() as f64) as u64)
                .max(SimTime::from_millis(1));
            SourceOtn::new(
                src_node,
                SourceParams {
                    pseudo_ack: true,
                    proxy_cnp: prof.proxy_cnp,
                    theta_proxy_bytes: p.theta_proxy_bytes,
                    cnp_min_interval: SimTime::from_nanos(cfg.transport.cnp_min_interval_ns),
                    relay_rto: rto,
                },
                bucket,
            )
        });
        let relay_check_every = src
            .as_ref()
            .map(|s| SimTime::from_nanos((s.params.relay_rto.as_nanos() / 4).max(1)))
            .unwrap_or(SimTime::ZERO);
        let est = prof.estimator.then(|| {
            DestEstimator::new(
                p,
                SlotThresholds {
                    theta_ack: SimTime::from_nanos((p.theta_ack_rtt_multiple * dest_intra.as_nanos() as f64) as u64),
                    theta_cnp_per_s: p.theta_cnp_per_ms * 1e3,
                },
                topo.aggregate_otn_capacity_bps(),
                cfg.trace.enabled,
            )
        });
        let register = prof.gated.then(|| BudgetRegister::new(p.rate_floor_bps, valid_for));

        // Default drain: what the receiving DC can take from its OTN edge,
        // each access link capped by the downlinks of the spine it feeds.
        let access_bps: f64 = topo
            .otn_access_links(1)
            .iter()
            .map(|&l| {
                let spine = topo.link(l).to;
                let down: u64 = topo
                    .links()
                    .iter()
                    .filter(|k| k.from == spine && k.class == LinkClass::Fabric)
                    .map(|k| k.cfg.rate_bps)
                    .sum();
                topo.link(l).cfg.rate_bps.min(down) as f64
            })
            .sum();
        let dest = DestOtn {
            node: dst_node,
            buf: PortQueue::new(&QueueConfig {
                capacity_bytes: p.dest_buffer_bytes,
                ecn: f.ecn,
                ecn_enabled: true,
            }),
            rates: cfg.drain.resolve(access_bps),
            rate_idx: 0,
            busy: false,
            residue_ns: 0.0,
            in_service: 0,
            idle_since: Some(SimTime::ZERO),
            spare_bits: 0.0,
            occ_integral: 0.0,
            last_change: SimTime::ZERO,
            slot_peak: 0,
            arrivals: 0,
            forced_drops: 0,
            force_dropped: BTreeSet::new(),
        };

        let plan = workload::generate_schedule(&cfg.workload, &topo, cfg.seed);
        let background = workload::generate_background(&cfg.workload, &topo, cfg.seed);
        let n_iter = plan.len();

        let mut w = World {
            cfg: cfg.clone(),
            prof,
            topo,
            q: EventQueue::new(),
            rng: workload::stream(cfg.seed, ECN_STREAM),
            ports,
            ingress,
            hosts: BTreeMap::new(),
            qps: Vec::new(),
            qp_index: BTreeMap::new(),
            msgs: Vec::new(),
            iter_outstanding: vec![0; n_iter],
            iter_issue: vec![SimTime::ZERO; n_iter],
            iter_last_delivery: vec![None; n_iter],
            plan,
            iterations_done: 0,
            background,
            bg_issued: 0,
            bg_outstanding: 0,
            src,
            src_node,
            gate_wake: None,
            dest,
            est,
            register,
            lane_free: [SimTime::ZERO; 2],
            control_msgs: 0,
            measured_d: None,
            themis_ref_rtt,
            relay_check_every,
            ledger: ByteLedger::default(),
            wire_bytes: 0,
            drops: 0,
            pfc_pauses: 0,
            inter_delivered: 0,
            intra_delivered: 0,
            slot_peaks: Vec::new(),
            buffer_trace: Vec::new(),
            last_progress: SimTime::ZERO,
            finished_at: None,
        };

        if let Some(first) = w.plan.first() {
            w.q.schedule_in(first.compute_gap, Ev::Iteration(0));
        }
        if let Some(b) = w.background.first() {
            w.q.schedule_in(b.at, Ev::Background(0));
        }
        for i in 1..w.dest.rates.len() {
            w.q.schedule_in(w.dest.rates[i].0, Ev::DrainRate(i));
        }
        w.q.schedule_in(t_slot, Ev::Slot);
        if w.prof.uses_control_channel() {
            w.send_control(TOWARD_DEST, ControlKind::DelayProbe);
            let r0 = w.dest.rate();
            if let Some(b) = w.est.as_mut().and_then(|e| e.initial_budget(r0, SimTime::ZERO)) {
                w.send_control(TOWARD_SOURCE, ControlKind::BudgetUpdate(b));
            }
        }
        if w.src.is_some() {
            w.q.schedule_in(w.relay_check_every, Ev::RelayCheck);
        }
        if w.cfg.trace.enabled {
            w.q.schedule_in(SimTime::ZERO, Ev::Sample);
        }
        w.q.schedule_in(w.watchdog_period(), Ev::Watchdog);
        Ok(w)
    }

    fn watchdog(&self) -> SimTime {
        SimTime::from_secs_f64(self.cfg.watchdog_ms * 1e-3)
    }

    fn watchdog_period(&self) -> SimTime {
        self.watchdog().min(SimTime::from_millis(1000))
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    fn now(&self) -> SimTime {
        self.q.now()
    }

    fn finished(&self) -> bool {
        self.iterations_done == self.plan.len() && self.bg_issued == self.background.len() && self.bg_outstanding == 0
    }

    /// Runs to completion (or the configured duration) and checks the
    /// end-of-run invariants.
    pub fn run(mut self) -> Result<RunOutcome> {
        let horizon = self
            .cfg
            .run_duration_ms
            .map(|ms| SimTime::from_secs_f64(ms * 1e-3))
            .unwrap_or(SimTime(u64::MAX));
        if self.finished() {
            self.finished_at = Some(SimTime::ZERO);
        }
        while self.finished_at.is_none() {
            let Some(ev) = self.q.pop_until(horizon) else {
                break;
            };
            self.handle(ev.payload)?;
            if self.finished() {
                self.finished_at = Some(self.now());
            }
        }
        let end = self.finished_at.unwrap_or_else(|| if horizon == SimTime(u64::MAX) { self.now() } else { horizon });
        self.finish(end)
    }

    fn handle(&mut self, ev: Ev) -> Result<()> {
        match ev {
            Ev::Arrive { link, pkt } => self.on_arrive(link, pkt),
            Ev::PortFree(link) => {
                self.ports[link.0 as usize].busy = false;
                self.try_start(link);
                self.after_port_progress(link)
            }
            Ev::Pfc { link, pause } => {
                let now = self.now();
                self.ports[link.0 as usize].q.set_paused(pause, now);
                if !pause {
                    self.try_start(link);
                    self.after_port_progress(link)?;
                }
                Ok(())
            }
            Ev::HostWake(h) => {
                if let Some(host) = self.hosts.get_mut(&h) {
                    if host.wake_at.is_some_and(|t| t <= self.q.now()) {
                        host.wake_at = None;
                    }
                }
                self.kick_host(h)
            }
            Ev::AlphaTimer(i) => {
                let qp = &mut self.qps[i];
                qp.st.cc.on_alpha_timer();
                if qp.st.cc.is_quiescent() {
                    qp.alpha_armed = false;
                } else {
                    let dt = SimTime::from_nanos(qp.st.cc.params.alpha_timer_ns);
                    self.q.schedule_in(dt, Ev::AlphaTimer(i));
                }
                Ok(())
            }
            Ev::RateTimer(i) => {
                let qp = &mut self.qps[i];
                if qp.st.cc.needs_rate_timer() {
                    qp.st.cc.rate_increase();
                    let dt = SimTime::from_nanos(qp.st.cc.params.rate_timer_ns);
                    self.q.schedule_in(dt, Ev::RateTimer(i));
                } else {
                    qp.rate_armed = false;
                }
                Ok(())
            }
            Ev::Rto(i) => self.on_rto(i),
            Ev::Iteration(i) => self.issue_iteration(i),
            Ev::Background(k) => self.issue_background(k),
            Ev::DrainDone { pkt, out } => {
                self.dest.busy = false;
                self.dest.in_service -= pkt.size as u64;
                self.enqueue(out, Queued { pkt, in_link: None }, false);
                self.kick_drain();
                Ok(())
            }
            Ev::DrainRate(i) => {
                let now = self.now();
                let idle = self.dest.idle_since.is_some();
                self.dest.flush_idle(now, idle);
                self.dest.rate_idx = i;
                Ok(())
            }
            Ev::Gate => {
                if self.gate_wake.is_some_and(|t| t <= self.q.now()) {
                    self.gate_wake = None;
                }
                self.run_gate();
                Ok(())
            }
            Ev::Slot => self.on_slot(),
            Ev::Control { lane, msg } => self.on_control(lane, msg),
            Ev::Stale(epoch) => {
                let now = self.now();
                let ow = self.one_way();
                if let (Some(reg), Some(src)) = (&self.register, &mut self.src) {
                    let b = reg.installed();
                    if b.epoch == epoch && b.is_stale(now, ow) {
                        src.bucket.set_rate(reg.effective_rate(now, ow), now);
                    }
                }
                Ok(())
            }
            Ev::RelayCheck => {
                let now = self.now();
                if let Some(src) = &mut self.src {
                    let pkts = src.check_timeouts(now);
                    if !pkts.is_empty() {
                        src.queue_retransmit(pkts);
                        self.run_gate();
                    }
                }
                self.q.schedule_in(self.relay_check_every, Ev::RelayCheck);
                Ok(())
            }
            Ev::Sample => {
                let now = self.now();
                self.buffer_trace.push((now, self.dest.buf.occupancy()));
                self.q.schedule_in(SimTime::from_nanos(self.cfg.trace.buffer_sample_ns.max(1)), Ev::Sample);
                Ok(())
            }
            Ev::Watchdog => {
                let now = self.now();
                if now - self.last_progress >= self.watchdog() {
                    return Err(SimError::Watchdog(format!(
                        "no delivery progress since {} (now {now}), {} iterations done",
                        self.last_progress, self.iterations_done
                    )));
                }
                self.q.schedule_in(self.watchdog_period(), Ev::Watchdog);
                Ok(())
            }
        }
    }

    // ---- ports and PFC ----

    fn enqueue(&mut self, link: LinkId, item: Queued, count_ingress: bool) {
        let is_data = item.pkt.kind.is_data();
        let size = item.pkt.size as u64;
        match self.ports[link.0 as usize].q.enqueue(item, &mut self.rng) {
            Enqueue::Dropped => {
                self.drops += 1;
                self.ledger.dropped += size;
                if !count_ingress {
                    if let Some(il) = item.in_link {
                        self.ingress_sub(il, size);
                    }
                }
            }
            Enqueue::Accepted { .. } => {
                if is_data && count_ingress {
                    if let Some(il) = item.in_link {
                        self.ingress_add(il, size);
                    }
                }
            }
        }
        self.try_start(link);
    }

    fn try_start(&mut self, link: LinkId) {
        let li = link.0 as usize;
        if self.ports[li].busy {
            return;
        }
        let Some(item) = self.ports[li].q.dequeue() else {
            return;
        };
        let size = item.pkt.size;
        if item.pkt.kind.is_data() {
            if let Some(il) = item.in_link {
                self.ingress_sub(il, size as u64);
            }
            self.wire_bytes += size as u64;
        }
        let cfg = self.topo.link(link).cfg;
        let dur = self.ports[li].ser.duration(&cfg, size);
        self.ports[li].busy = true;
        self.q.schedule_in(dur, Ev::PortFree(link));
        self.q.schedule_in(dur + cfg.prop_delay, Ev::Arrive { link, pkt: item.pkt });
    }

    fn ingress_add(&mut self, link: LinkId, bytes: u64) {
        let ing = &mut self.ingress[link.0 as usize];
        ing.bytes += bytes;
        let frame = ing.gate.as_mut().and_then(|g| g.update(ing.bytes));
        self.send_pfc(link, frame);
    }

    fn ingress_sub(&mut self, link: LinkId, bytes: u64) {
        let ing = &mut self.ingress[link.0 as usize];
        debug_assert!(ing.bytes >= bytes, "ingress counter underflow on {link:?}");
        ing.bytes -= bytes;
        let frame = ing.gate.as_mut().and_then(|g| g.update(ing.bytes));
        self.send_pfc(link, frame);
    }

    fn send_pfc(&mut self, link: LinkId, frame: Option<PfcFrame>) {
        let Some(frame) = frame else {
            return;
        };
        let pause = frame == PfcFrame::Pause;
        if pause {
            self.pfc_pauses += 1;
        }
        let d = self.topo.link(link).cfg.prop_delay;
        self.q.schedule_in(d, Ev::Pfc { link, pause });
    }

    /// A port freed up or resumed: wake whatever feeds it.
    fn after_port_progress(&mut self, link: LinkId) -> Result<()> {
        let from = self.topo.link(link).from;
        if matches!(self.topo.node(from), NodeKind::Server { .. }) {
            return self.kick_host(from);
        }
        if from == self.dest.node && self.topo.link(link).class == LinkClass::OtnAccess {
            self.kick_drain();
        }
        Ok(())
    }

    fn arm(&mut self, at: SimTime, ev: Ev) -> Result<()> {
        self.q.schedule(at, ev)?;
        Ok(())
    }

    // ---- hosts ----

    fn qp_for(&mut self, key: QpKey, src: NodeId, dst: NodeId) -> usize {
        if let Some(&i) = self.qp_index.get(&key) {
            return i;
        }
        let i = self.qps.len();
        let conn = ConnId(i as u32);
        let mtu = self.cfg.topology.mtu;
        let inter = self.topo.is_inter_dc(src, dst);
        self.topo.place_connection(conn, src, dst);
        let base = self.topo.base_rtt(src, dst, conn, mtu + HEADER_BYTES, HEADER_BYTES);
        let mut params = self.cfg.transport.dcqcn;
        if inter && self.prof.rtt_scaled_cc {
            let ratio = base.as_nanos() as f64 / self.themis_ref_rtt.as_nanos().max(1) as f64;
            params = params.scaled_for_rtt(ratio);
        }
        let line = self.topo.host_rate_bps() as f64;
        let st = QueuePairState::new(
            conn,
            src,
            dst,
            mtu,
            DcqcnState::new(params, line),
            self.cfg.transport.window_cap_bytes,
            base,
        );
        let rx = ReceiverState::new(
            conn,
            dst,
            src,
            SimTime::from_nanos(self.cfg.transport.cnp_min_interval_ns),
            self.cfg.transport.ack_coalesce,
        );
        self.qps.push(Qp {
            st,
            rx,
            class: if inter { FlowClass::InterDc } else { FlowClass::IntraDc },
            relayed: inter && self.prof.relay,
            alpha_armed: false,
            rate_armed: false,
            rto_deadline: None,
            rto_pending: false,
            undelivered: VecDeque::new(),
            submitted_bytes: 0,
        });
        self.qp_index.insert(key, i);
        self.hosts
            .entry(src)
            .or_insert_with(|| Host {
                qps: Vec::new(),
                rr: 0,
                wake_at: None,
            })
            .qps
            .push(i);
        let hs = RocePacket::header_only(conn, 0, PacketKind::Control(HostControl::Handshake), src, dst);
        let up = self.topo.server_uplink(src);
        self.enqueue(up, Queued { pkt: hs, in_link: None }, false);
        i
    }

    fn submit(&mut self, qi: usize, size: u64, class: FlowClass, iteration: Option<usize>) -> Result<()> {
        let now = self.now();
        let id = self.msgs.len();
        self.msgs.push(MessageRecord {
            size,
            class,
            iteration,
            issued_at: now,
            delivered_at: None,
            completed_at: None,
        });
        let (_, end) = self.qps[qi].st.enqueue_message(MsgId(id as u64), size)?;
        self.qps[qi].undelivered.push_back((end, id));
        self.qps[qi].submitted_bytes += size;
        self.kick_host(self.qps[qi].st.src)
    }

    fn issue_iteration(&mut self, i: usize) -> Result<()> {
        let now = self.now();
        self.iter_issue[i] = now;
        self.last_progress = now;
        let msgs = self.plan[i].messages.clone();
        self.iter_outstanding[i] = msgs.len();
        for m in msgs {
            let qi = self.qp_for(QpKey::Slot(m.slot), m.src, m.dst);
            let class = self.qps[qi].class;
            self.submit(qi, m.size, class, Some(i))?;
        }
        Ok(())
    }

    fn issue_background(&mut self, k: usize) -> Result<()> {
        let m = self.background[k].clone();
        self.bg_issued += 1;
        self.bg_outstanding += 1;
        let qi = self.qp_for(QpKey::Pair(m.src, m.dst), m.src, m.dst);
        let class = self.qps[qi].class;
        self.submit(qi, m.size, class, None)?;
        if let Some(next) = self.background.get(k + 1) {
            let at = next.at;
            self.arm(at, Ev::Background(k + 1))?;
        }
        Ok(())
    }

    /// Lets host `h` put one DATA packet on its uplink if the NIC is free.
    fn kick_host(&mut self, h: NodeId) -> Result<()> {
        let up = self.topo.server_uplink(h);
        {
            let p = &self.ports[up.0 as usize];
            if p.busy || p.q.data_len() > 0 || p.q.is_paused() {
                return Ok(());
            }
        }
        let now = self.now();
        let Some(host) = self.hosts.get_mut(&h) else {
            return Ok(());
        };
        let n = host.qps.len();
        let mut earliest: Option<SimTime> = None;
        for j in 0..n {
            let idx = (host.rr + j) % n;
            let qi = host.qps[idx];
            match self.qps[qi].st.sender_tick(now) {
                Tick::Emit { pkt, byte_counter_fired } => {
                    host.rr = idx + 1;
                    let qp = &mut self.qps[qi];
                    if byte_counter_fired {
                        qp.st.cc.rate_increase();
                    }
                    if qp.rto_deadline.is_none() {
                        let rto = self.rto(qi);
                        self.qps[qi].rto_deadline = Some(now + rto);
                        self.ensure_rto_timer(qi)?;
                    }
                    self.ledger.injected += pkt.size as u64;
                    self.enqueue(up, Queued { pkt, in_link: None }, false);
                    return Ok(());
                }
                Tick::RetryAt(t) => earliest = Some(earliest.map_or(t, |e| e.min(t))),
                Tick::WindowClosed | Tick::Idle => {}
            }
        }
        if let Some(t) = earliest {
            if host.wake_at.is_none_or(|w| t < w || w < now) {
                host.wake_at = Some(t);
                self.arm(t, Ev::HostWake(h))?;
            }
        }
        Ok(())
    }

    fn rto(&self, qi: usize) -> SimTime {
        let t = &self.cfg.transport;
        let srtt = self.qps[qi].st.srtt().as_nanos() as f64;
        SimTime::from_nanos((t.rto_rtt_multiple * srtt) as u64).max(SimTime::from_nanos(t.rto_min_ns))
    }

    fn ensure_rto_timer(&mut self, qi: usize) -> Result<()> {
        let qp = &mut self.qps[qi];
        if let (Some(d), false) = (qp.rto_deadline, qp.rto_pending) {
            qp.rto_pending = true;
            self.arm(d, Ev::Rto(qi))?;
        }
        Ok(())
    }

    fn on_rto(&mut self, qi: usize) -> Result<()> {
        let now = self.now();
        self.qps[qi].rto_pending = false;
        let Some(d) = self.qps[qi].rto_deadline else {
            return Ok(());
        };
        if now < d {
            return self.ensure_rto_timer(qi);
        }
        self.qps[qi].rto_deadline = None;
        if self.qps[qi].st.has_unacked() {
            self.qps[qi].st.on_timeout();
            let src = self.qps[qi].st.src;
            self.kick_host(src)?;
        }
        Ok(())
    }

    fn on_progress(&mut self, qi: usize) -> Result<()> {
        let now = self.now();
        let rto = self.rto(qi);
        let qp = &mut self.qps[qi];
        qp.rto_deadline = qp.st.has_unacked().then_some(now + rto);
        self.ensure_rto_timer(qi)
    }

    fn arm_cc_timers(&mut self, qi: usize) {
        let qp = &mut self.qps[qi];
        if !qp.alpha_armed {
            qp.alpha_armed = true;
            self.q
                .schedule_in(SimTime::from_nanos(qp.st.cc.params.alpha_timer_ns), Ev::AlphaTimer(qi));
        }
        let qp = &mut self.qps[qi];
        if !qp.rate_armed {
            qp.rate_armed = true;
            self.q
                .schedule_in(SimTime::from_nanos(qp.st.cc.params.rate_timer_ns), Ev::RateTimer(qi));
        }
    }

    fn on_host_packet(&mut self, node: NodeId, pkt: RocePacket) -> Result<()> {
        let now = self.now();
        let qi = pkt.conn.0 as usize;
        if qi >= self.qps.len() {
            return Err(SimError::Protocol(format!("packet for unknown connection {:?}", pkt.conn)));
        }
        match pkt.kind {
            PacketKind::Data => {
                self.ledger.absorbed += pkt.size as u64;
                let out = self.qps[qi].rx.on_data(&pkt, now);
                if out.delivered > 0 {
                    self.last_progress = now;
                    let qp = &mut self.qps[qi];
                    match qp.class {
                        FlowClass::InterDc => self.inter_delivered += out.delivered as u64,
                        FlowClass::IntraDc => self.intra_delivered += out.delivered as u64,
                    }
                    while let Some(&(end, id)) = qp.undelivered.front() {
                        if end > qp.rx.expected {
                            break;
                        }
                        qp.undelivered.pop_front();
                        self.msgs[id].delivered_at = Some(now);
                        if let Some(it) = self.msgs[id].iteration {
                            self.iter_last_delivery[it] = Some(now);
                        }
                    }
                }
                let up = self.topo.server_uplink(node);
                for c in [out.cnp, out.ack].into_iter().flatten() {
                    self.enqueue(up, Queued { pkt: c, in_link: None }, false);
                }
                Ok(())
            }
            PacketKind::Ack | PacketKind::PseudoAck | PacketKind::Nack => {
                let completes = pkt.kind != PacketKind::PseudoAck && !self.qps[qi].relayed;
                let qp = &mut self.qps[qi];
                let o = if pkt.kind == PacketKind::Nack {
                    qp.st.on_nack(pkt.psn, completes)?
                } else {
                    qp.st.on_ack(pkt.psn, completes)?
                };
                if o.advanced {
                    qp.st.sample_rtt(pkt.psn, now);
                    self.on_progress(qi)?;
                }
                self.complete(qi, &o.completed)?;
                self.kick_host(node)
            }
            PacketKind::Cnp => {
                self.qps[qi].st.cc.on_cnp(now);
                self.arm_cc_timers(qi);
                Ok(())
            }
            PacketKind::Control(HostControl::Completion) => {
                let done = self.qps[qi].st.on_completion_record(pkt.psn);
                self.complete(qi, &done)
            }
            PacketKind::Control(HostControl::Handshake) => Ok(()),
        }
    }

    fn complete(&mut self, qi: usize, ids: &[MsgId]) -> Result<()> {
        let now = self.now();
        for id in ids {
            let i = id.0 as usize;
            let m = &mut self.msgs[i];
            if m.delivered_at.is_none() {
                return Err(SimError::Invariant(format!(
                    "message {i} acknowledged complete on {:?} before its last byte was delivered",
                    self.qps[qi].st.conn
                )));
            }
            m.completed_at = Some(now);
            self.last_progress = now;
            match m.iteration {
                Some(it) => {
                    self.iter_outstanding[it] -= 1;
                    if self.iter_outstanding[it] == 0 {
                        self.iterations_done += 1;
                        if let Some(next) = self.plan.get(it + 1) {
                            let gap = next.compute_gap;
                            self.q.schedule_in(gap, Ev::Iteration(it + 1));
                        }
                    }
                }
                None => self.bg_outstanding -= 1,
            }
        }
        Ok(())
    }

    // ---- switching ----

    fn on_arrive(&mut self, link: LinkId, pkt: RocePacket) -> Result<()> {
        if pkt.kind.is_data() {
            self.wire_bytes -= pkt.size as u64;
        }
        let at = self.topo.link(link).to;
        match self.topo.node(at) {
            NodeKind::Server { .. } => self.on_host_packet(at, pkt),
            NodeKind::Leaf { .. } | NodeKind::Spine { .. } => {
                self.forward(at, link, pkt);
                Ok(())
            }
            NodeKind::OtnEdge { .. } if at == self.src_node => self.on_source_otn(link, pkt),
            NodeKind::OtnEdge { .. } => self.on_dest_otn(link, pkt),
        }
    }

    fn forward(&mut self, at: NodeId, in_link: LinkId, pkt: RocePacket) {
        let out = self.topo.next_hop(at, pkt.dst, pkt.conn);
        self.enqueue(out, Queued { pkt, in_link: Some(in_link) }, true);
    }

    /// Sends a header-only packet from an OTN edge toward a host.
    fn emit_from(&mut self, at: NodeId, pkt: RocePacket) {
        let out = self.topo.next_hop(at, pkt.dst, pkt.conn);
        self.enqueue(out, Queued { pkt, in_link: None }, false);
    }

    // ---- source OTN ----

    fn on_source_otn(&mut self, link: LinkId, pkt: RocePacket) -> Result<()> {
        let now = self.now();
        let at = self.src_node;
        let from_dc = self.topo.link(link).class != LinkClass::LongHaul;
        if self.src.is_none() {
            self.forward(at, link, pkt);
            return Ok(());
        }
        if from_dc {
            match pkt.kind {
                PacketKind::Data => {
                    let src = self.src.as_mut().expect("relay present");
                    match src.on_data(Queued { pkt, in_link: Some(link) }, now) {
                        DataVerdict::Passthrough(item) => {
                            let out = self.topo.next_hop(at, item.pkt.dst, item.pkt.conn);
                            self.enqueue(out, item, true);
                        }
                        DataVerdict::Staged { proxy_cnp } => {
                            self.ingress_add(link, pkt.size as u64);
                            if let Some(c) = proxy_cnp {
                                self.emit_from(at, c);
                            }
                            self.run_gate();
                        }
                        DataVerdict::Duplicate(_) => {
                            self.ledger.dropped += pkt.size as u64;
                        }
                    }
                }
                PacketKind::Control(HostControl::Handshake) => {
                    let src = self.src.as_mut().expect("relay present");
                    src.on_flow_setup(pkt.conn, pkt.src, pkt.dst, pkt.psn, now);
                    self.forward(at, link, pkt);
                }
                _ => self.forward(at, link, pkt),
            }
            return Ok(());
        }
        match pkt.kind {
            PacketKind::Ack | PacketKind::Nack if self.src.as_ref().is_some_and(|s| s.is_tracked(pkt.conn)) => {
                let src = self.src.as_mut().expect("relay present");
                let act = src.on_end_ack(&pkt, now);
                let retx = !act.retransmit.is_empty();
                if retx {
                    src.queue_retransmit(act.retransmit);
                }
                for p in [act.forward, act.completion].into_iter().flatten() {
                    self.emit_from(at, p);
                }
                if retx {
                    self.run_gate();
                }
            }
            _ => self.forward(at, link, pkt),
        }
        Ok(())
    }

    fn run_gate(&mut self) {
        let now = self.now();
        let Some(src) = self.src.as_mut() else {
            return;
        };
        let mut out: Vec<Release> = Vec::new();
        let retry = src.release(now, &mut out);
        let at = self.src_node;
        for r in out {
            if r.in_link.is_none() {
                self.ledger.injected += r.pkt.size as u64;
            }
            let lh = self.topo.next_hop(at, r.pkt.dst, r.pkt.conn);
            self.enqueue(
                lh,
                Queued {
                    pkt: r.pkt,
                    in_link: r.in_link,
                },
                false,
            );
            if let Some(pa) = r.pseudo_ack {
                self.emit_from(at, pa);
            }
        }
        if let Some(t) = retry {
            let t = t.max(now);
            if self.gate_wake.is_none_or(|w| t < w || w < now) {
                self.gate_wake = Some(t);
                self.q.schedule(t, Ev::Gate).expect("gate retry is never in the past");
            }
        }
    }

    // ---- destination OTN ----

    fn on_dest_otn(&mut self, link: LinkId, pkt: RocePacket) -> Result<()> {
        let now = self.now();
        let at = self.dest.node;
        let from_long_haul = self.topo.link(link).class == LinkClass::LongHaul;
        if from_long_haul {
            if !pkt.kind.is_data() {
                self.emit_from(at, pkt);
                return Ok(());
            }
            self.dest.arrivals += 1;
            if self
                .cfg
                .force_dest_drop_every
                .is_some_and(|n| self.dest.arrivals.is_multiple_of(n))
                && self.dest.force_dropped.insert((pkt.conn, pkt.psn))
            {
                self.dest.forced_drops += 1;
                self.drops += 1;
                self.ledger.dropped += pkt.size as u64;
                return Ok(());
            }
            self.dest.account(now);
            match self.dest.buf.enqueue(Queued { pkt, in_link: None }, &mut self.rng) {
                Enqueue::Dropped => {
                    self.drops += 1;
                    self.ledger.dropped += pkt.size as u64;
                }
                Enqueue::Accepted { .. } => {
                    self.dest.slot_peak = self.dest.slot_peak.max(self.dest.buf.occupancy());
                    self.dest.flush_idle(now, false);
                }
            }
            self.kick_drain();
            return Ok(());
        }
        match pkt.kind {
            PacketKind::Ack => {
                if let Some(e) = &mut self.est {
                    e.on_ack(pkt.conn, pkt.psn, now);
                }
                self.forward(at, link, pkt);
            }
            PacketKind::Cnp if self.prof.absorb_dest_cnp => {
                let upd = self.est.as_mut().and_then(|e| e.on_cnp(now));
                if let Some(b) = upd {
                    self.send_control(TOWARD_SOURCE, ControlKind::BudgetUpdate(b));
                }
            }
            _ => self.forward(at, link, pkt),
        }
        Ok(())
    }

    fn kick_drain(&mut self) {
        let now = self.now();
        if self.dest.busy {
            return;
        }
        let Some(front) = self.dest.buf.peek_data() else {
            if self.dest.idle_since.is_none() {
                self.dest.idle_since = Some(now);
            }
            return;
        };
        let fp = front.pkt;
        let out = self.topo.next_hop(self.dest.node, fp.dst, fp.conn);
        let port = &self.ports[out.0 as usize];
        if port.q.is_paused() || port.q.occupancy() > self.cfg.fabric.drain_handoff_bytes {
            return;
        }
        self.dest.account(now);
        let item = self.dest.buf.dequeue().expect("front exists");
        let dur = item.pkt.bits() as f64 * 1e9 / self.dest.rate() + self.dest.residue_ns;
        let whole = dur.floor();
        self.dest.residue_ns = dur - whole;
        self.dest.busy = true;
        self.dest.in_service += item.pkt.size as u64;
        if let Some(e) = &mut self.est {
            e.on_egress(item.pkt.conn, item.pkt.psn, item.pkt.size, now);
        }
        self.q
            .schedule_in(SimTime::from_nanos(whole as u64), Ev::DrainDone { pkt: item.pkt, out });
    }

    fn on_slot(&mut self) -> Result<()> {
        let now = self.now();
        let idle = self.dest.idle_since.is_some();
        self.dest.flush_idle(now, idle);
        let spare = (self.dest.spare_bits / 8.0) as u64;
        self.dest.spare_bits = 0.0;
        self.slot_peaks.push((now, self.dest.slot_peak));
        self.dest.slot_peak = self.dest.buf.occupancy();
        if let Some(e) = &mut self.est {
            let (_, upd) = e.on_slot_boundary(now, spare);
            if let Some(b) = upd {
                self.send_control(TOWARD_SOURCE, ControlKind::BudgetUpdate(b));
            }
        }
        let t_slot = SimTime::from_nanos(self.cfg.otn.t_slot_ns);
        self.q.schedule_in(t_slot, Ev::Slot);
        Ok(())
    }

    // ---- control subchannel ----

    fn one_way(&self) -> SimTime {
        self.measured_d.unwrap_or_else(|| self.topo.long_haul_delay())
    }

    fn send_control(&mut self, lane: usize, kind: ControlKind) {
        let now = self.now();
        let msg = ControlMessage { kind, sent_at: now };
        let start = self.lane_free[lane].max(now);
        let ser = SimTime::from_nanos((CONTROL_MSG_BYTES as f64 * 8.0 * 1e9 / self.cfg.otn.control_rate_bps).ceil() as u64);
        self.lane_free[lane] = start + ser;
        self.control_msgs += 1;
        let at = start + ser + self.topo.long_haul_delay();
        self.q.schedule(at, Ev::Control { lane, msg }).expect("control arrival is in the future");
    }

    fn on_control(&mut self, lane: usize, msg: ControlMessage) -> Result<()> {
        let now = self.now();
        match (lane, msg.kind) {
            (TOWARD_DEST, ControlKind::DelayProbe) => {
                self.send_control(TOWARD_SOURCE, ControlKind::DelayProbeEcho { probe_sent_at: msg.sent_at });
            }
            (TOWARD_SOURCE, ControlKind::DelayProbeEcho { probe_sent_at }) => {
                self.measured_d = Some(crate::otn::one_way_from_echo(probe_sent_at, now));
            }
            (TOWARD_SOURCE, ControlKind::BudgetUpdate(b)) => self.install_budget(b)?,
            (_, other) => {
                return Err(SimError::Protocol(format!("unexpected control message {other:?} on lane {lane}")));
            }
        }
        Ok(())
    }

    fn install_budget(&mut self, b: RateBudget) -> Result<()> {
        let now = self.now();
        let (Some(reg), Some(src)) = (&mut self.register, &mut self.src) else {
            return Ok(());
        };
        if reg.offer(b, now) == InstallOutcome::Installed {
            src.bucket.set_rate(b.rate_bps, now);
            let stale_at = b.issued_at + b.valid_for + self.measured_d.unwrap_or_else(|| self.topo.long_haul_delay())
                + SimTime::from_nanos(1);
            self.q.schedule(stale_at.max(now), Ev::Stale(b.epoch))?;
            self.run_gate();
        }
        Ok(())
    }

    // ---- end of run ----

    fn finish(mut self, end: SimTime) -> Result<RunOutcome> {
        self.dest.account(end);
        let staged = self.src.as_ref().map_or(0, |s| s.staged_total());
        let queued: u64 = self.ports.iter().map(|p| p.q.data_bytes_queued()).sum();
        self.ledger.in_network = queued + staged + self.wire_bytes + self.dest.buf.data_bytes_queued() + self.dest.in_service;
        if !self.ledger.balanced() {
            return Err(SimError::Invariant(format!("byte ledger does not balance: {:?}", self.ledger)));
        }
        if let Some(reg) = &self.register {
            if reg.history().windows(2).any(|w| w[1].1 <= w[0].1) {
                return Err(SimError::Invariant("installed budget epochs are not strictly increasing".into()));
            }
        }
        // In-order delivery: the receiver's ledger equals the submitted
        // payload once the connection is done, and never exceeds it.
        let done = self.finished_at.is_some();
        for qp in &self.qps {
            let over = qp.rx.delivered_bytes > qp.submitted_bytes;
            if over || (done && qp.rx.delivered_bytes != qp.submitted_bytes) {
                return Err(SimError::Invariant(format!(
                    "{:?}: delivered {} of {} submitted bytes",
                    qp.st.conn, qp.rx.delivered_bytes, qp.submitted_bytes
                )));
            }
        }

        let measured: Vec<usize> = self
            .topo
            .links()
            .iter()
            .enumerate()
            .filter(|(_, l)| l.class != LinkClass::LongHaul)
            .map(|(i, _)| i)
            .collect();
        let mut paused_total = 0u64;
        let mut paused_from_log = 0u64;
        for &i in &measured {
            let q = &self.ports[i].q;
            paused_total += q.paused_total(end).as_nanos();
            let log = q.pause_log();
            if log.windows(2).any(|w| w[0].1 == w[1].1) || log.first().is_some_and(|e| !e.1) {
                return Err(SimError::Invariant(format!("pause/resume log of link {i} does not alternate")));
            }
            let mut since = None;
            for &(t, paused) in log {
                if paused {
                    since = Some(t);
                } else if let Some(s) = since.take() {
                    paused_from_log += (t.min(end)).saturating_sub(s).as_nanos();
                }
            }
            if let Some(s) = since {
                paused_from_log += end.saturating_sub(s).as_nanos();
            }
        }
        let denom = measured.len() as f64 * end.as_nanos() as f64;
        let ratio = |x: u64| if denom > 0.0 { x as f64 / denom } else { 0.0 };

        let mut spans: Vec<(SimTime, SimTime)> = self
            .iter_issue
            .iter()
            .zip(&self.iter_last_delivery)
            .filter_map(|(&s, e)| e.map(|e| (s, e)))
            .collect();
        spans.sort();
        let mut active = 0u64;
        let mut cur: Option<(SimTime, SimTime)> = None;
        for (s, e) in spans {
            match cur {
                Some((cs, ce)) if s <= ce => cur = Some((cs, ce.max(e))),
                Some((cs, ce)) => {
                    active += (ce - cs).as_nanos();
                    cur = Some((s, e));
                }
                None => cur = Some((s, e)),
            }
        }
        if let Some((cs, ce)) = cur {
            active += (ce - cs).as_nanos();
        }

        let src = self.src.as_ref();
        Ok(RunOutcome {
            end,
            inter_delivered_bytes: self.inter_delivered,
            intra_delivered_bytes: self.intra_delivered,
            active_time: SimTime::from_nanos(active),
            peak_buf: self.dest.buf.peak(),
            mean_buf: if end.as_nanos() > 0 {
                self.dest.occ_integral / end.as_nanos() as f64
            } else {
                0.0
            },
            pause_ratio: ratio(paused_total),
            pause_ratio_from_log: ratio(paused_from_log),
            measured_ports: measured.len(),
            drops: self.drops,
            control_msgs: self.control_msgs,
            budget_history: self.register.as_ref().map(|r| r.history().to_vec()).unwrap_or_default(),
            slot_observations: self.est.as_ref().map(|e| e.observations.clone()).unwrap_or_default(),
            slot_peaks: std::mem::take(&mut self.slot_peaks),
            buffer_trace: std::mem::take(&mut self.buffer_trace),
            ledger: self.ledger,
            one_way_delay: self.one_way(),
            events: self.q.dispatched_count(),
            sender_retransmits: self.qps.iter().map(|q| q.st.retransmitted_packets).sum(),
            relay_retransmits: src.map_or(0, |s| s.relay_retransmits),
            proxy_cnps: src.map_or(0, |s| s.proxy_cnps),
            cnps_absorbed: self.est.as_ref().map_or(0, |e| e.cnps_absorbed),
            peak_staged: src.map_or(0, |s| s.peak_staged),
            pfc_pauses: self.pfc_pauses,
            messages: self.msgs,
        })
    }
}

/// Builds and runs one scenario.
pub fn simulate(cfg: &ScenarioConfig) -> Result<RunOutcome> {
    World::new(cfg)?.run()
}
