//! The simulation world: node registry, routing, wireless delivery rules
//! and the event loop.
//!
//! Wired nodes (correspondent node, home agents, access routers) form a
//! full-mesh backbone where every hop costs one backbone latency; the only
//! exception is the access-router-to-access-router path across provider
//! domains, which is stretched by a configurable factor because it transits
//! both provider cores. Wireless hops cost serialization at the ad-hoc data
//! rate plus a fixed propagation constant, and reception requires coverage
//! and an attached radio at both ends of the flight.

use crate::addressing::{
    configure_coa, encapsulate, ingress_filter, Address, AddrRole, BuPurpose, FilterVerdict, Host,
    MsgKind, NodeId, Packet, PacketKind, Prefix, SigPayload, ENCAP_HEADER_BYTES,
};
use crate::config::{Protocol, RunParams};
use crate::engine::{fnv1a, node_code, Ev, EvKind, TimerKind, FNV_OFFSET};
use crate::mobility::{adhoc_reachable, in_range, lane_in_band, LaneFlag, RoadScenario, VehicleState};
use crate::proto_fmipv6::{self, FmipSm};
use crate::proto_multimr::{self, MultiSm};
use crate::records::{
    FlowCounters, HandoverRecord, RunReport, SignalingTotals, PHASE_ATTACH, PHASE_ENTRY,
    PHASE_REESTABLISH,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

/// Loss classes of the conservation ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossClass {
    Range,
    Link,
    Buffer,
    Ingress,
}

/// How a data packet reached a mobile router.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataPath {
    /// Via the router's own radio from the old access router.
    DirectOld,
    /// Via the router's own radio from the new access router.
    DirectNew,
    /// Via the new access router but through the forwarding tunnel or
    /// handover buffer (baseline).
    NewViaTunnel,
    /// Relayed over the ad-hoc hop by the pair peer.
    ViaPeer,
    /// No handover in progress.
    Steady,
}

pub struct HaState {
    pub id: u8,
    pub addr: Address,
    pub cache: crate::addressing::BindingCache,
    /// Delegated mobile network prefixes and the owner's registered
    /// care-of address.
    pub mnp_registry: BTreeMap<Prefix, Address>,
}

#[derive(Debug, Default)]
pub struct Reseq {
    pub next_seq: Option<u64>,
    pub held: BTreeMap<u64, Packet>,
    pub timer_armed: bool,
}

pub struct ArState {
    pub idx: u16,
    /// Home agent id of this router's provider.
    pub isp: u8,
    pub pos: (f64, f64),
    pub addr: Address,
    pub prefix: Prefix,
    /// Active forwarding tunnels: mobile router -> target access router.
    pub divert: BTreeMap<u16, u16>,
    /// Buffers held for routers that announced themselves but have not yet
    /// attached (baseline).
    pub buffering: BTreeMap<u16, VecDeque<Packet>>,
    pub reseq: BTreeMap<u16, Reseq>,
    /// Outstanding handover-initiate exchanges, by mobile router.
    pub pending: BTreeMap<u16, PendingRetx>,
}

#[derive(Debug, Clone)]
pub struct PendingRetx {
    pub token: u64,
    pub attempts: u32,
    pub rtt_estimate: f64,
    pub route: SigRoute,
    pub pkt: Packet,
    /// Signaling phase the message is attributed to.
    pub phase: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigRoute {
    /// Ad-hoc hop to the pair peer, which relays onward.
    ViaPeer,
    /// Own radio to the attached access router.
    ViaAr,
    /// Wired, between access routers.
    ArWired { from: u16, to: u16 },
}

pub enum ProtoState {
    Multi(MultiSm),
    Fmip(FmipSm),
}

pub struct MrNode {
    pub id: u16,
    pub vehicle: VehicleState,
    pub peer: Option<u16>,
    /// Home address the correspondent node sends to; never changes.
    pub hoa: Address,
    /// Home agent currently anchoring the flow.
    pub anchor: u8,
    pub attached_ar: Option<u16>,
    pub radio_attached: bool,
    pub last_attach_time: f64,
    pub coa: Address,
    /// Mobile network prefix currently advertised on the ingress interface.
    pub mnp: Prefix,
    pub mnp_epoch: u32,
    pub owned: std::collections::BTreeSet<Address>,
    pub proto: ProtoState,
    /// Relay service for the pair peer: packets held until the binding
    /// acknowledgment confirms the redirect.
    pub relay_open: bool,
    pub relay_buf: VecDeque<Packet>,
    pub pending: Option<PendingRetx>,
    pub bu_seq: u64,
}

impl MrNode {
    pub fn owns(&self, a: &Address) -> bool {
        self.owned.contains(a)
    }

    pub fn sm_multi(&mut self) -> &mut MultiSm {
        match &mut self.proto {
            ProtoState::Multi(sm) => sm,
            _ => panic!("not a multi-mr node"),
        }
    }

    pub fn sm_fmip(&mut self) -> &mut FmipSm {
        match &mut self.proto {
            ProtoState::Fmip(sm) => sm,
            _ => panic!("not an fmip node"),
        }
    }
}

/// Test and trace instrumentation for one delivered data packet.
#[derive(Debug, Clone)]
pub struct DeliveredInfo {
    pub mr: u16,
    pub time: f64,
    pub seq: u64,
    pub max_depth: u8,
    pub ha_mask: u8,
    pub path_via_peer: bool,
    pub record_open: bool,
    pub size_bytes: u32,
    pub trace: Option<Vec<NodeId>>,
}

pub struct World {
    pub p: RunParams,
    pub road: RoadScenario,
    pub now: f64,
    queue: BinaryHeap<Reverse<Ev>>,
    next_ev_seq: u64,
    pub cn_addr: Address,
    pub has: Vec<HaState>,
    pub ars: Vec<ArState>,
    pub mrs: Vec<MrNode>,
    /// Home agent the correspondent node's packets for each flow route to.
    pub cn_anchor: Vec<u8>,
    pub flows: Vec<FlowCounters>,
    pub records: Vec<HandoverRecord>,
    pub open_record: Vec<Option<usize>>,
    pub rng: ChaCha8Rng,
    pub sig: SignalingTotals,
    pub hard_breaks: u32,
    pub skipped_triggers: u32,
    pub fmip_predictive: u32,
    pub fmip_reactive: u32,
    pub delivered_data_bytes: u64,
    pub trace_hash: u64,
    pub events_executed: u64,
    pub lane_flags: Vec<LaneFlag>,
    pub next_token: u64,
    pub delivered_log: Option<Vec<DeliveredInfo>>,
    pub trace_lines: Option<Vec<String>>,
}

pub fn isp_of_ar(idx: u16) -> u8 {
    // Odd-indexed routers belong to the first provider's home agent,
    // even-indexed to the second's.
    if idx % 2 == 1 {
        0
    } else {
        1
    }
}

impl World {
    pub fn new(p: RunParams) -> World {
        let road = p.scenario.road_scenario();
        let cn_addr = Address::fixed(Prefix::HomeNet(0), Host::Cn);
        let has = (0..2u8)
            .map(|id| HaState {
                id,
                addr: Address::fixed(Prefix::HomeNet(id), Host::Ha(id)),
                cache: crate::addressing::BindingCache::new(),
                mnp_registry: BTreeMap::new(),
            })
            .collect();
        let ar_count = road.ar_count();
        let ars = (0..ar_count)
            .map(|i| ArState {
                idx: i,
                isp: isp_of_ar(i),
                pos: road.ar_position(i),
                addr: Address::fixed(Prefix::ArNet(i), Host::Ar(i)),
                prefix: Prefix::ArNet(i),
                divert: BTreeMap::new(),
                buffering: BTreeMap::new(),
                reseq: BTreeMap::new(),
                pending: BTreeMap::new(),
            })
            .collect();
        let collect = p.collect_traces;
        let rng = ChaCha8Rng::seed_from_u64(p.seed);
        let mut w = World {
            road,
            now: 0.0,
            queue: BinaryHeap::new(),
            next_ev_seq: 0,
            cn_addr,
            has,
            ars,
            mrs: Vec::new(),
            cn_anchor: Vec::new(),
            flows: Vec::new(),
            records: Vec::new(),
            open_record: Vec::new(),
            rng,
            sig: SignalingTotals::default(),
            hard_breaks: 0,
            skipped_triggers: 0,
            fmip_predictive: 0,
            fmip_reactive: 0,
            delivered_data_bytes: 0,
            trace_hash: FNV_OFFSET,
            events_executed: 0,
            lane_flags: Vec::new(),
            next_token: 0,
            delivered_log: collect.then(Vec::new),
            trace_lines: None,
            p,
        };
        w.spawn_vehicles();
        w.schedule_initial();
        w
    }

    fn spawn_vehicles(&mut self) {
        let n = self.p.scenario.vehicles.count;
        let gap = self.p.scenario.vehicles.pair_gap_m;
        let spacing = self.road.ar_spacing_m;
        let (vmin, vmax) = (self.p.scenario.speed_min_mps(), self.p.scenario.speed_max_mps());
        let width = self.road.width_m;
        let protocol = self.p.protocol;

        let mut id = 0u16;
        let pairs = n / 2;
        for pair in 0..pairs {
            // Pair mates share one speed draw so their gap stays constant.
            let speed = self.rng.gen_range(vmin..=vmax);
            let base = pair as f64 * 37.0 + self.rng.gen_range(0.0..spacing);
            for front in [true, false] {
                let lane = if width > 0.0 { self.rng.gen_range(0.0..=width) } else { 0.0 };
                let x0 = if front { base + gap } else { base };
                self.push_vehicle(id, lane, speed, x0, protocol);
                id += 1;
            }
            let (a, b) = (id - 2, id - 1);
            self.mrs[a as usize].peer = Some(b);
            self.mrs[b as usize].peer = Some(a);
        }
        if n % 2 == 1 {
            let speed = self.rng.gen_range(vmin..=vmax);
            let lane = if width > 0.0 { self.rng.gen_range(0.0..=width) } else { 0.0 };
            let base = pairs as f64 * 37.0 + self.rng.gen_range(0.0..spacing);
            self.push_vehicle(id, lane, speed, base, protocol);
        }

        // Flag lanes whose overlap chord falls outside the stated band.
        for m in 0..self.mrs.len() {
            let lane = self.mrs[m].vehicle.lane_y;
            if let Some(seg) = self.road.boundary_overlap(0, lane) {
                if !lane_in_band(seg.d_ab) {
                    self.lane_flags.push(LaneFlag { vehicle: m as u16, lane_y: lane, d_ab: seg.d_ab });
                }
            } else {
                self.lane_flags.push(LaneFlag { vehicle: m as u16, lane_y: lane, d_ab: 0.0 });
            }
        }
    }

    fn push_vehicle(&mut self, id: u16, lane_y: f64, speed: f64, x0: f64, protocol: Protocol) {
        let vehicle = VehicleState { id, lane_y, speed_mps: speed, x0 };
        // Initial attachment: the covering router furthest along the road.
        let mut attach: Option<u16> = None;
        for i in 0..self.ars.len() as u16 {
            if in_range((x0, lane_y), self.ars[i as usize].pos, self.road.ar_range_m) {
                attach = Some(i);
            }
        }
        let ar = attach.unwrap_or(0);
        let isp = self.ars[ar as usize].isp;
        let hoa = Address::home(Prefix::HomeNet(isp), Host::Mr(id));
        let coa = configure_coa(Prefix::ArNet(ar), Host::Mr(id));
        let mnp = Prefix::Mnp { mr: id, epoch: 0 };
        let mut owned = std::collections::BTreeSet::new();
        owned.insert(hoa);
        owned.insert(coa);

        // Bootstrap registration, outside any handover machinery.
        crate::addressing::process_binding_update(
            &mut self.has[isp as usize].cache,
            hoa,
            coa,
            NodeId::Mr(id),
            0,
            0.0,
        );
        self.has[isp as usize].mnp_registry.insert(mnp, coa);

        let proto = match protocol {
            Protocol::MultiMr => ProtoState::Multi(MultiSm::new()),
            Protocol::Fmipv6 => ProtoState::Fmip(FmipSm::new()),
        };
        self.mrs.push(MrNode {
            id,
            vehicle,
            peer: None,
            hoa,
            anchor: isp,
            attached_ar: Some(ar),
            radio_attached: true,
            last_attach_time: 0.0,
            coa,
            mnp,
            mnp_epoch: 0,
            owned,
            proto,
            relay_open: false,
            relay_buf: VecDeque::new(),
            pending: None,
            bu_seq: 0,
        });
        self.cn_anchor.push(isp);
        self.flows.push(FlowCounters::default());
        self.open_record.push(None);
    }

    fn schedule_initial(&mut self) {
        let duration = self.p.scenario.run.duration_s;
        // Traffic sources.
        if self.p.scenario.traffic.cn_rate_pps > 0.0 {
            for f in 0..self.mrs.len() as u16 {
                self.schedule(0.0, EvKind::CnEmit { flow: f });
            }
        }
        // Router advertisement beacons.
        let interval = self.p.scenario.protocol.required_interval_s;
        if interval > 0.0 {
            for i in 0..self.ars.len() as u16 {
                self.schedule(interval, EvKind::Timer { node: NodeId::Ar(i), kind: TimerKind::ArBeacon });
            }
        }
        // Overlap crossings, precomputed from the constant-speed kinematics.
        let boundaries = self.road.ar_count().saturating_sub(1);
        for m in 0..self.mrs.len() {
            let v = self.mrs[m].vehicle;
            for b in 0..boundaries {
                if let Some(seg) = self.road.boundary_overlap(b, v.lane_y) {
                    if let Some(t_enter) = v.time_to_reach(seg.entry_a.0) {
                        if t_enter > 0.0 && t_enter < duration {
                            let node = NodeId::Mr(m as u16);
                            self.schedule(
                                t_enter,
                                EvKind::Timer { node, kind: TimerKind::OverlapEnter { boundary: b } },
                            );
                            if let Some(t_exit) = v.time_to_reach(seg.exit_b.0) {
                                self.schedule(
                                    t_exit,
                                    EvKind::Timer { node, kind: TimerKind::CoverageExit { boundary: b } },
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    // ------------------------------------------------------------------
    // Scheduling and send primitives
    // ------------------------------------------------------------------

    pub fn schedule(&mut self, time: f64, kind: EvKind) {
        debug_assert!(time >= self.now, "causality: {} < {}", time, self.now);
        let ev = Ev { time, seq: self.next_ev_seq, kind };
        self.next_ev_seq += 1;
        self.queue.push(Reverse(ev));
    }

    pub fn schedule_timer(&mut self, time: f64, node: NodeId, kind: TimerKind) {
        self.schedule(time, EvKind::Timer { node, kind });
    }

    pub fn alloc_token(&mut self) -> u64 {
        self.next_token += 1;
        self.next_token
    }

    pub fn new_bu_seq(&mut self, m: u16) -> u64 {
        self.mrs[m as usize].bu_seq += 1;
        self.mrs[m as usize].bu_seq
    }

    pub fn mr_pos(&self, m: u16) -> (f64, f64) {
        self.mrs[m as usize].vehicle.pos_at(self.now)
    }

    pub fn wired_latency(&self, from: NodeId, to: NodeId) -> f64 {
        match (from, to) {
            (NodeId::Ar(a), NodeId::Ar(b))
                if self.ars[a as usize].isp != self.ars[b as usize].isp =>
            {
                self.p.inter_domain_latency_s()
            }
            _ => self.p.backbone_latency_s,
        }
    }

    /// Resolve the wired node a packet addressed to `addr` is delivered to.
    pub fn resolve_wired(&self, addr: Address) -> Option<NodeId> {
        match addr.host {
            Host::Cn => Some(NodeId::Cn),
            Host::Ha(h) => Some(NodeId::Ha(h)),
            Host::Ar(i) => Some(NodeId::Ar(i)),
            Host::Mr(m) => match addr.prefix {
                Prefix::ArNet(i) => Some(NodeId::Ar(i)),
                Prefix::HomeNet(_) => Some(NodeId::Ha(self.cn_anchor[m as usize])),
                Prefix::Mnp { .. } => self
                    .has
                    .iter()
                    .find(|ha| ha.mnp_registry.contains_key(&addr.prefix))
                    .map(|ha| NodeId::Ha(ha.id)),
            },
        }
    }

    pub fn wired_send(&mut self, from: NodeId, to: NodeId, mut pkt: Packet) {
        let loss = self.p.scenario.links.loss_prob_wired;
        if loss > 0.0 && self.rng.gen::<f64>() < loss {
            self.on_packet_lost(pkt, LossClass::Link);
            return;
        }
        pkt.push_trace(from);
        let delay = self.wired_latency(from, to);
        let t = self.now + delay;
        self.schedule(t, EvKind::WiredDeliver { to, pkt });
    }

    /// Route a wired packet by its outermost destination.
    pub fn wired_route(&mut self, from: NodeId, pkt: Packet) {
        match self.resolve_wired(pkt.outer_dst()) {
            Some(to) => self.wired_send(from, to, pkt),
            None => self.on_packet_lost(pkt, LossClass::Range),
        }
    }

    /// Schedule a wireless transmission starting at `start`.
    ///
    /// Geometric reachability is required at transmission start; the
    /// delivery handler rechecks it (and radio attachment) at arrival.
    pub fn radio_send_at(
        &mut self,
        start: f64,
        from: NodeId,
        to: NodeId,
        via_tunnel: bool,
        mut pkt: Packet,
    ) {
        let range_ok = match (from, to) {
            (NodeId::Ar(i), NodeId::Mr(m)) | (NodeId::Mr(m), NodeId::Ar(i)) => in_range(
                self.mrs[m as usize].vehicle.pos_at(start),
                self.ars[i as usize].pos,
                self.road.ar_range_m,
            ),
            (NodeId::Mr(a), NodeId::Mr(b)) => adhoc_reachable(
                &self.mrs[a as usize].vehicle,
                &self.mrs[b as usize].vehicle,
                start,
                self.road.adhoc_range_m,
            ),
            _ => false,
        };
        if !range_ok {
            self.on_packet_lost(pkt, LossClass::Range);
            return;
        }
        let loss = self.p.scenario.links.loss_prob_wireless;
        if loss > 0.0 && self.rng.gen::<f64>() < loss {
            self.on_packet_lost(pkt, LossClass::Link);
            return;
        }
        pkt.push_trace(from);
        let delay = self.p.wireless_delay_s(pkt.size_bytes);
        let t = start + delay;
        self.schedule(t, EvKind::RadioDeliver { from, to, departed: start, via_tunnel, pkt });
    }

    pub fn radio_send(&mut self, from: NodeId, to: NodeId, via_tunnel: bool, pkt: Packet) {
        self.radio_send_at(self.now, from, to, via_tunnel, pkt);
    }

    // ------------------------------------------------------------------
    // Ledger
    // ------------------------------------------------------------------

    pub fn on_packet_lost(&mut self, pkt: Packet, class: LossClass) {
        if pkt.kind != PacketKind::Data {
            return; // signaling recovery is the retransmission policy's job
        }
        let flow = pkt.flow.expect("data packet carries flow id") as usize;
        let c = &mut self.flows[flow];
        c.in_flight -= 1;
        match class {
            LossClass::Range => c.lost_range += 1,
            LossClass::Link => c.lost_link += 1,
            LossClass::Buffer => c.lost_buffer += 1,
            LossClass::Ingress => c.dropped_ingress += 1,
        }
        if class != LossClass::Ingress {
            if let Some(idx) = self.open_record[flow] {
                self.records[idx].pkts_lost += 1;
            }
        }
    }

    // ------------------------------------------------------------------
    // Signaling accounting
    // ------------------------------------------------------------------

    /// Count one originated (or retransmitted) signaling message.
    pub fn count_signaling(&mut self, mr: u16, phase: usize, kind: MsgKind) {
        self.sig.messages += 1;
        self.sig.message_bytes += kind.size_bytes() as u64;
        if let Some(idx) = self.open_record.get(mr as usize).copied().flatten() {
            let rec = &mut self.records[idx];
            rec.signaling_msgs += 1;
            rec.signaling_bytes += kind.size_bytes() as u64;
            rec.phase_msgs[phase] += 1;
        }
    }

    pub fn count_retransmission(&mut self, mr: u16) {
        self.sig.retransmissions += 1;
        if let Some(idx) = self.open_record.get(mr as usize).copied().flatten() {
            self.records[idx].retransmissions += 1;
        }
    }

    /// Push one encapsulation header onto a data packet, with overhead
    /// accounting. Signaling encapsulation is not charged as overhead.
    pub fn encap_counted(&mut self, pkt: Packet, outer_src: Address, outer_dst: Address) -> Packet {
        let is_data = pkt.kind == PacketKind::Data;
        let out = encapsulate(pkt, outer_src, outer_dst).expect("encap depth within bound");
        if is_data {
            self.sig.encap_overhead_bytes += ENCAP_HEADER_BYTES as u64;
        }
        out
    }

    // ------------------------------------------------------------------
    // Records
    // ------------------------------------------------------------------

    pub fn open_rec(&mut self, m: u16, rec: HandoverRecord) {
        let idx = self.records.len();
        self.records.push(rec);
        self.open_record[m as usize] = Some(idx);
    }

    pub fn rec_mut(&mut self, m: u16) -> Option<&mut HandoverRecord> {
        self.open_record[m as usize].map(move |idx| &mut self.records[idx])
    }

    pub fn close_rec(&mut self, m: u16) {
        self.open_record[m as usize] = None;
    }

    // ------------------------------------------------------------------
    // Event loop
    // ------------------------------------------------------------------

    pub fn run_to_completion(&mut self) {
        while let Some(Reverse(ev)) = self.queue.pop() {
            debug_assert!(ev.time >= self.now);
            self.now = ev.time;
            self.events_executed += 1;
            self.absorb_hash(&ev);
            if let Some(lines) = self.trace_lines.as_mut() {
                lines.push(format_trace_line(&ev));
            }
            self.dispatch(ev.kind);
        }
        self.finalize();
    }

    fn absorb_hash(&mut self, ev: &Ev) {
        let mut h = fnv1a(self.trace_hash, ev.time.to_bits());
        let code = match &ev.kind {
            EvKind::CnEmit { flow } => 1 + *flow as u64,
            EvKind::WiredDeliver { to, pkt } => 0x1_0000 + node_code(*to) * 131 + pkt.seq,
            EvKind::RadioDeliver { to, pkt, .. } => 0x2_0000 + node_code(*to) * 131 + pkt.seq,
            EvKind::Timer { node, .. } => 0x3_0000 + node_code(*node),
        };
        h = fnv1a(h, code);
        self.trace_hash = h;
    }

    fn dispatch(&mut self, kind: EvKind) {
        match kind {
            EvKind::CnEmit { flow } => self.handle_cn_emit(flow),
            EvKind::WiredDeliver { to, pkt } => self.handle_wired_deliver(to, pkt),
            EvKind::RadioDeliver { from, to, departed, via_tunnel, pkt } => {
                self.handle_radio_deliver(from, to, departed, via_tunnel, pkt)
            }
            EvKind::Timer { node, kind } => self.handle_timer(node, kind),
        }
    }

    // ------------------------------------------------------------------
    // Traffic source
    // ------------------------------------------------------------------

    fn handle_cn_emit(&mut self, flow: u16) {
        let duration = self.p.scenario.run.duration_s;
        if self.now >= duration {
            return;
        }
        let m = flow as usize;
        let seq = self.flows[m].sent;
        self.flows[m].sent += 1;
        self.flows[m].in_flight += 1;
        let size = self.p.scenario.traffic.packet_size_bytes;
        let mut pkt = Packet::data(self.cn_addr, self.mrs[m].hoa, size, seq, flow, self.now);
        if self.p.collect_traces {
            pkt.trace = Some(vec![NodeId::Cn]);
        }
        let anchor = self.cn_anchor[m];
        self.wired_send(NodeId::Cn, NodeId::Ha(anchor), pkt);

        let next = self.now + 1.0 / self.p.scenario.traffic.cn_rate_pps;
        if next < duration {
            self.schedule(next, EvKind::CnEmit { flow });
        }
    }

    // ------------------------------------------------------------------
    // Wired delivery
    // ------------------------------------------------------------------

    fn handle_wired_deliver(&mut self, to: NodeId, pkt: Packet) {
        match to {
            NodeId::Ha(h) => self.ha_receive(h, pkt),
            NodeId::Ar(i) => self.ar_receive_wired(i, pkt),
            NodeId::Cn => { /* nothing terminates at the correspondent node */ }
            NodeId::Mr(_) => unreachable!("mobile routers have no wired interface"),
        }
    }

    fn ha_receive(&mut self, h: u8, mut pkt: Packet) {
        pkt.push_trace(NodeId::Ha(h));
        if pkt.outer_dst().host == Host::Ha(h) {
            self.ha_handle_sig(h, pkt);
        } else {
            self.ha_forward(h, pkt);
        }
    }

    /// Intercept-and-tunnel at a home agent: home bindings first, then
    /// delegated mobile network prefixes.
    pub fn ha_forward(&mut self, h: u8, mut pkt: Packet) {
        if pkt.kind == PacketKind::Data {
            pkt.ha_visit_mask |= 1 << h;
        }
        let od = pkt.outer_dst();
        let ha_addr = self.has[h as usize].addr;
        if let Some(binding) = self.has[h as usize].cache.lookup(&od) {
            let coa = binding.coa;
            let out = self.encap_counted(pkt, ha_addr, coa);
            self.forward_from_ha(h, out);
        } else if let Some(&coa) = self.has[h as usize].mnp_registry.get(&od.prefix) {
            let out = self.encap_counted(pkt, ha_addr, coa);
            self.forward_from_ha(h, out);
        } else {
            // No binding: transient after a superseded registration.
            self.on_packet_lost(pkt, LossClass::Range);
        }
    }

    fn forward_from_ha(&mut self, h: u8, pkt: Packet) {
        match self.resolve_wired(pkt.outer_dst()) {
            Some(NodeId::Ha(other)) if other == h => {
                // Delegated prefix registered here; keep resolving locally.
                self.ha_forward(h, pkt)
            }
            Some(to) => self.wired_send(NodeId::Ha(h), to, pkt),
            None => self.on_packet_lost(pkt, LossClass::Range),
        }
    }

    fn ha_handle_sig(&mut self, h: u8, pkt: Packet) {
        let Some(SigPayload::Bu { mr, hoa, coa, bu_seq, purpose, mnp, hoa2 }) = pkt.sig.clone()
        else {
            return;
        };
        let tunnel_peer = match coa.host {
            Host::Mr(m) => NodeId::Mr(m),
            Host::Ar(i) => NodeId::Ar(i),
            _ => NodeId::Ha(h),
        };
        let now = self.now;
        let ack = match purpose {
            BuPurpose::Register => {
                if let Some(p) = mnp {
                    self.has[h as usize].mnp_registry.insert(p, coa);
                }
                if let Some(h2) = hoa2 {
                    crate::addressing::process_binding_update(
                        &mut self.has[h as usize].cache,
                        h2,
                        coa,
                        tunnel_peer,
                        bu_seq,
                        now,
                    );
                }
                // The new provider's agent also takes over the home binding;
                // it starts serving it once the flow re-anchors here.
                crate::addressing::process_binding_update(
                    &mut self.has[h as usize].cache,
                    hoa,
                    coa,
                    tunnel_peer,
                    bu_seq,
                    now,
                )
            }
            _ => crate::addressing::process_binding_update(
                &mut self.has[h as usize].cache,
                hoa,
                coa,
                tunnel_peer,
                bu_seq,
                now,
            ),
        };
        let phase = match purpose {
            BuPurpose::EntryRelay => PHASE_ENTRY,
            BuPurpose::Register => PHASE_ATTACH,
            BuPurpose::Reestablish | BuPurpose::FmipHome => PHASE_REESTABLISH,
        };
        self.count_signaling(mr, phase, MsgKind::BindingAck);
        let back = Packet::signaling(
            MsgKind::BindingAck,
            self.has[h as usize].addr,
            hoa,
            SigPayload::BAck { mr, ack, purpose },
            self.now,
        );
        let back = self.with_trace(back);
        // Deliver through the freshly installed binding.
        self.ha_forward(h, back);
    }

    pub fn with_trace(&self, mut pkt: Packet) -> Packet {
        if self.p.collect_traces {
            pkt.trace = Some(Vec::new());
        }
        pkt
    }

    // ------------------------------------------------------------------
    // Access router
    // ------------------------------------------------------------------

    fn ar_receive_wired(&mut self, i: u16, mut pkt: Packet) {
        pkt.push_trace(NodeId::Ar(i));
        let od = pkt.outer_dst();
        if od.host == Host::Ar(i) {
            if pkt.depth() > 0 {
                // Inter-router forwarding tunnel terminates here.
                let inner = crate::addressing::decapsulate(pkt, self.ars[i as usize].addr)
                    .expect("tunnel endpoint matches");
                self.ar_tunnel_arrival(i, inner);
            } else {
                proto_fmipv6::ar_on_wired_sig(self, i, pkt);
            }
            return;
        }
        match od {
            Address { prefix: Prefix::ArNet(net), host: Host::Mr(m), .. } if net == i => {
                self.ar_radio_out(i, m, false, pkt);
            }
            _ => {
                // Misrouted; nothing legitimate lands here.
                self.on_packet_lost(pkt, LossClass::Range);
            }
        }
    }

    /// A packet popped out of the inter-router tunnel at the new router.
    fn ar_tunnel_arrival(&mut self, i: u16, pkt: Packet) {
        let m = match pkt.outer_dst().host {
            Host::Mr(m) => m,
            _ => {
                self.on_packet_lost(pkt, LossClass::Range);
                return;
            }
        };
        if let Some(buf) = self.ars[i as usize].buffering.get_mut(&m) {
            if buf.len() >= self.p.scenario.protocol.fmip_buffer_cap {
                self.on_packet_lost(pkt, LossClass::Buffer);
            } else {
                buf.push_back(pkt);
            }
            return;
        }
        self.ar_radio_out(i, m, true, pkt);
    }

    /// Final hop: transmit toward an attached mobile router, via the
    /// forwarding tunnel when one is active, through the resequencer when
    /// one is armed.
    pub fn ar_radio_out(&mut self, i: u16, m: u16, via_tunnel: bool, pkt: Packet) {
        if let Some(&target) = self.ars[i as usize].divert.get(&m) {
            let (src, dst) = (self.ars[i as usize].addr, self.ars[target as usize].addr);
            let out = self.encap_counted(pkt, src, dst);
            self.wired_send(NodeId::Ar(i), NodeId::Ar(target), out);
            return;
        }
        if pkt.kind == PacketKind::Data && self.ars[i as usize].reseq.contains_key(&m) {
            let releases = self.reseq_offer(i, m, pkt);
            for p in releases {
                self.radio_send(NodeId::Ar(i), NodeId::Mr(m), via_tunnel, p);
            }
            return;
        }
        self.radio_send(NodeId::Ar(i), NodeId::Mr(m), via_tunnel, pkt);
    }

    fn reseq_offer(&mut self, i: u16, m: u16, pkt: Packet) -> Vec<Packet> {
        let hold = self.p.scenario.protocol.reseq_hold_factor * self.p.backbone_latency_s;
        let mut arm_timer = false;
        let mut out = Vec::new();
        {
            let rs = self.ars[i as usize].reseq.get_mut(&m).expect("reseq armed");
            match rs.next_seq {
                None => {
                    rs.next_seq = Some(pkt.seq + 1);
                    out.push(pkt);
                }
                Some(next) if pkt.seq <= next => {
                    rs.next_seq = Some(next.max(pkt.seq + 1));
                    out.push(pkt);
                    while let Some(n) = rs.next_seq {
                        match rs.held.remove(&n) {
                            Some(p) => {
                                rs.next_seq = Some(n + 1);
                                out.push(p);
                            }
                            None => break,
                        }
                    }
                }
                Some(_) => {
                    rs.held.insert(pkt.seq, pkt);
                    if !rs.timer_armed {
                        rs.timer_armed = true;
                        arm_timer = true;
                    }
                }
            }
        }
        if arm_timer {
            self.schedule_timer(self.now + hold, NodeId::Ar(i), TimerKind::ReseqTimeout { mr: m });
        }
        out
    }

    fn handle_reseq_timeout(&mut self, i: u16, m: u16) {
        let Some(rs) = self.ars[i as usize].reseq.get_mut(&m) else { return };
        rs.timer_armed = false;
        let held = std::mem::take(&mut rs.held);
        if let Some((&last, _)) = held.iter().next_back() {
            rs.next_seq = Some(last + 1);
        }
        for (_, p) in held {
            self.radio_send(NodeId::Ar(i), NodeId::Mr(m), false, p);
        }
    }

    /// A signaling packet received over the radio and addressed beyond this
    /// router enters the wired domain here; the provider's ingress filter
    /// applies to router-originated sources.
    fn ar_uplink(&mut self, i: u16, pkt: Packet) {
        let enabled = self.p.scenario.protocol.ingress_filtering;
        if enabled && matches!(pkt.outer_src().host, Host::Mr(_)) {
            let verdict = {
                let allowed = self.isp_prefixes(self.ars[i as usize].isp, i);
                ingress_filter(&pkt, &allowed, true)
            };
            if verdict == FilterVerdict::Drop {
                self.sig.ingress_drops += 1;
                if pkt.kind == PacketKind::Data {
                    self.on_packet_lost(pkt, LossClass::Ingress);
                }
                return;
            }
        }
        self.wired_route(NodeId::Ar(i), pkt);
    }

    /// Prefixes belonging to the provider of `isp`: its routers' subnets and
    /// the mobile network prefixes its home agent delegated.
    fn isp_prefixes(&self, isp: u8, _via_ar: u16) -> Vec<Prefix> {
        let mut v: Vec<Prefix> = self
            .ars
            .iter()
            .filter(|a| a.isp == isp)
            .map(|a| a.prefix)
            .collect();
        v.extend(self.has[isp as usize].mnp_registry.keys().copied());
        v
    }

    fn ar_receive_radio(&mut self, i: u16, from: u16, mut pkt: Packet) {
        pkt.push_trace(NodeId::Ar(i));
        let od = pkt.outer_dst();
        if od.host == Host::Ar(i) {
            // Locally handled router signaling.
            match pkt.sig.clone() {
                Some(SigPayload::RtSol { mr }) => {
                    self.count_signaling(mr, PHASE_ATTACH, MsgKind::RtAdv);
                    let reply = Packet::signaling(
                        MsgKind::RtAdv,
                        self.ars[i as usize].addr,
                        self.mrs[mr as usize].coa,
                        SigPayload::RtAdv { mr, prefix: self.ars[i as usize].prefix },
                        self.now,
                    );
                    let reply = self.with_trace(reply);
                    self.radio_send(NodeId::Ar(i), NodeId::Mr(mr), false, reply);
                }
                Some(SigPayload::Na { mr, coa }) => {
                    // Uniqueness is guaranteed by construction; the router
                    // answers in the same slot.
                    self.count_signaling(mr, PHASE_ATTACH, MsgKind::NeighborAck);
                    let reply = Packet::signaling(
                        MsgKind::NeighborAck,
                        self.ars[i as usize].addr,
                        coa,
                        SigPayload::Nack { mr, coa },
                        self.now,
                    );
                    let reply = self.with_trace(reply);
                    self.radio_send(NodeId::Ar(i), NodeId::Mr(mr), false, reply);
                }
                Some(SigPayload::RtSolPr { .. })
                | Some(SigPayload::Fbu { .. })
                | Some(SigPayload::Fna { .. }) => {
                    proto_fmipv6::ar_on_radio_sig(self, i, from, pkt);
                }
                _ => {}
            }
            return;
        }
        // Onward into the wired domain.
        self.ar_uplink(i, pkt);
    }

    // ------------------------------------------------------------------
    // Radio delivery
    // ------------------------------------------------------------------

    fn handle_radio_deliver(
        &mut self,
        from: NodeId,
        to: NodeId,
        departed: f64,
        via_tunnel: bool,
        pkt: Packet,
    ) {
        match (from, to) {
            (NodeId::Ar(i), NodeId::Mr(m)) => {
                let geo_ok = in_range(self.mr_pos(m), self.ars[i as usize].pos, self.road.ar_range_m);
                let mr = &self.mrs[m as usize];
                let radio_ok = mr.radio_attached
                    && mr.attached_ar == Some(i)
                    && mr.last_attach_time <= departed;
                if geo_ok && radio_ok {
                    self.mr_receive_radio(m, from, via_tunnel, pkt);
                    return;
                }
                // Cooperative reception: the pair mate picks up frames its
                // partner can no longer hear.
                if self.p.protocol == Protocol::MultiMr {
                    if let Some(mate) = self.mrs[m as usize].peer {
                        let mate_ok = {
                            let mt = &self.mrs[mate as usize];
                            mt.radio_attached
                                && in_range(
                                    mt.vehicle.pos_at(self.now),
                                    self.ars[i as usize].pos,
                                    self.road.ar_range_m,
                                )
                        };
                        if mate_ok {
                            let mut p = pkt;
                            p.push_trace(NodeId::Mr(mate));
                            self.mate_relay(mate, m, p);
                            return;
                        }
                    }
                }
                self.on_packet_lost(pkt, LossClass::Range);
            }
            (NodeId::Mr(m), NodeId::Ar(i)) => {
                let geo_ok = in_range(self.mr_pos(m), self.ars[i as usize].pos, self.road.ar_range_m);
                if geo_ok {
                    self.ar_receive_radio(i, m, pkt);
                } else {
                    self.on_packet_lost(pkt, LossClass::Range);
                }
            }
            (NodeId::Mr(a), NodeId::Mr(b)) => {
                let ok = adhoc_reachable(
                    &self.mrs[a as usize].vehicle,
                    &self.mrs[b as usize].vehicle,
                    self.now,
                    self.road.adhoc_range_m,
                );
                if ok {
                    self.mr_receive_radio(b, from, via_tunnel, pkt);
                } else {
                    self.on_packet_lost(pkt, LossClass::Range);
                }
            }
            _ => unreachable!("invalid radio pairing"),
        }
    }

    // ------------------------------------------------------------------
    // Mobile router receive path
    // ------------------------------------------------------------------

    fn mr_receive_radio(&mut self, m: u16, from: NodeId, via_tunnel: bool, mut pkt: Packet) {
        pkt.push_trace(NodeId::Mr(m));
        // Strip every tunnel header addressed to one of our own addresses.
        loop {
            let od = pkt.outer_dst();
            if pkt.depth() > 0 && self.mrs[m as usize].owns(&od) {
                pkt = crate::addressing::decapsulate(pkt, od).expect("owned endpoint");
                continue;
            }
            break;
        }
        let dst = pkt.outer_dst();
        if self.mrs[m as usize].owns(&dst) {
            match pkt.kind {
                PacketKind::Data => self.mr_deliver_data(m, from, via_tunnel, pkt),
                PacketKind::Signaling(_) => self.mr_on_signaling(m, pkt),
            }
            return;
        }
        // Address inside our advertised mobile network prefix: forward on
        // the ingress (ad-hoc) interface toward its owner.
        if let Prefix::Mnp { mr: owner_of_prefix, .. } = dst.prefix {
            if owner_of_prefix == m {
                if let Host::Mr(owner) = dst.host {
                    self.radio_send(NodeId::Mr(m), NodeId::Mr(owner), false, pkt);
                    return;
                }
            }
        }
        // Something for the pair mate (its home or care-of address, or an
        // outbound message it handed us for relaying).
        if let Some(mate) = self.mrs[m as usize].peer {
            let for_mate = self.mrs[mate as usize].owns(&dst);
            let outbound = matches!(dst.host, Host::Ha(_) | Host::Ar(_) | Host::Cn);
            if for_mate {
                self.mate_relay(m, mate, pkt);
                return;
            }
            if outbound {
                // Relay toward the infrastructure over our own attachment.
                if let Some(ar) = self.mrs[m as usize].attached_ar {
                    if self.mrs[m as usize].radio_attached {
                        self.radio_send(NodeId::Mr(m), NodeId::Ar(ar), false, pkt);
                    }
                }
                return;
            }
        }
        // Not for us and no mate to serve: drop silently.
    }

    /// Hold or forward a packet we carry on behalf of the pair mate.
    /// Data is gated until the binding acknowledgment confirms the
    /// redirect; signaling passes immediately and an entry acknowledgment
    /// opens the gate.
    pub fn mate_relay(&mut self, relay: u16, mate: u16, pkt: Packet) {
        match pkt.kind {
            PacketKind::Signaling(_) => {
                let opens_gate = matches!(
                    pkt.sig,
                    Some(SigPayload::BAck { purpose: BuPurpose::EntryRelay, mr, .. }) if mr == mate
                );
                self.radio_send(NodeId::Mr(relay), NodeId::Mr(mate), false, pkt);
                if opens_gate && !self.mrs[relay as usize].relay_open {
                    self.mrs[relay as usize].relay_open = true;
                    let buf = std::mem::take(&mut self.mrs[relay as usize].relay_buf);
                    for p in buf {
                        self.radio_send(NodeId::Mr(relay), NodeId::Mr(mate), false, p);
                    }
                }
            }
            PacketKind::Data => {
                if self.mrs[relay as usize].relay_open {
                    self.radio_send(NodeId::Mr(relay), NodeId::Mr(mate), false, pkt);
                } else {
                    self.mrs[relay as usize].relay_buf.push_back(pkt);
                }
            }
        }
    }

    fn mr_deliver_data(&mut self, m: u16, from: NodeId, via_tunnel: bool, pkt: Packet) {
        debug_assert_eq!(pkt.depth(), 0, "delivered packet fully decapsulated");
        debug_assert_eq!(pkt.size_bytes, self.p.scenario.traffic.packet_size_bytes);
        let flow = pkt.flow.expect("data flow") as usize;
        self.flows[flow].in_flight -= 1;
        self.flows[flow].delivered += 1;
        self.delivered_data_bytes += pkt.size_bytes as u64;

        let path = self.classify_path(m, from, via_tunnel);
        let record_open = self.open_record[m as usize].is_some();
        if let Some(log) = self.delivered_log.as_mut() {
            log.push(DeliveredInfo {
                mr: m,
                time: self.now,
                seq: pkt.seq,
                max_depth: pkt.max_depth_seen,
                ha_mask: pkt.ha_visit_mask,
                path_via_peer: path == DataPath::ViaPeer,
                record_open,
                size_bytes: pkt.size_bytes,
                trace: pkt.trace.clone(),
            });
        }
        if record_open {
            let two_has = pkt.ha_visit_mask.count_ones() >= 2;
            let depth2 = pkt.max_depth_seen >= 2;
            let rec = self.rec_mut(m).expect("open record");
            match path {
                DataPath::DirectOld => rec.t_last_pkt_old_path = Some(self.now),
                DataPath::ViaPeer => {
                    if rec.t_first_pkt_new_path.is_none() {
                        rec.t_first_pkt_new_path = Some(self.now);
                    }
                    rec.pkts_via_peer += 1;
                }
                DataPath::NewViaTunnel | DataPath::DirectNew => {
                    if rec.t_first_pkt_new_path.is_none() {
                        rec.t_first_pkt_new_path = Some(self.now);
                    }
                }
                DataPath::Steady => {}
            }
            if depth2 {
                rec.depth2_deliveries += 1;
            }
            if two_has {
                rec.two_ha_deliveries += 1;
            }
            if path == DataPath::DirectNew {
                match self.p.protocol {
                    Protocol::MultiMr => proto_multimr::on_direct_new_data(self, m),
                    Protocol::Fmipv6 => proto_fmipv6::on_direct_new_data(self, m),
                }
            }
        }
    }

    fn classify_path(&mut self, m: u16, from: NodeId, via_tunnel: bool) -> DataPath {
        let Some(idx) = self.open_record[m as usize] else {
            return DataPath::Steady;
        };
        let rec = &self.records[idx];
        match from {
            NodeId::Mr(_) => DataPath::ViaPeer,
            NodeId::Ar(i) if i == rec.boundary => DataPath::DirectOld,
            NodeId::Ar(i) if i == rec.boundary + 1 => {
                if via_tunnel {
                    DataPath::NewViaTunnel
                } else {
                    DataPath::DirectNew
                }
            }
            _ => DataPath::Steady,
        }
    }

    fn mr_on_signaling(&mut self, m: u16, pkt: Packet) {
        match self.p.protocol {
            Protocol::MultiMr => proto_multimr::on_signaling(self, m, pkt),
            Protocol::Fmipv6 => proto_fmipv6::on_signaling(self, m, pkt),
        }
    }

    // ------------------------------------------------------------------
    // Mobile router send helper + retransmissions
    // ------------------------------------------------------------------

    /// Originate a signaling message from a mobile router, count it, and
    /// optionally arm a retransmission timer for the exchange.
    pub fn mr_send_sig(
        &mut self,
        m: u16,
        pkt: Packet,
        route: SigRoute,
        phase: usize,
        rtt_estimate: Option<f64>,
    ) {
        let kind = match pkt.kind {
            PacketKind::Signaling(k) => k,
            PacketKind::Data => unreachable!(),
        };
        self.count_signaling(m, phase, kind);
        if let Some(est) = rtt_estimate {
            let token = self.alloc_token();
            self.mrs[m as usize].pending = Some(PendingRetx {
                token,
                attempts: 0,
                rtt_estimate: est,
                route,
                pkt: pkt.clone(),
                phase,
            });
            self.schedule_timer(self.now + est, NodeId::Mr(m), TimerKind::Retx { token });
        }
        self.mr_transmit(m, route, pkt);
    }

    fn mr_transmit(&mut self, m: u16, route: SigRoute, pkt: Packet) {
        match route {
            SigRoute::ViaPeer => match self.mrs[m as usize].peer {
                Some(mate) => self.radio_send(NodeId::Mr(m), NodeId::Mr(mate), false, pkt),
                None => { /* unreachable peer handled by caller */ }
            },
            SigRoute::ViaAr => {
                if let (Some(ar), true) =
                    (self.mrs[m as usize].attached_ar, self.mrs[m as usize].radio_attached)
                {
                    self.radio_send(NodeId::Mr(m), NodeId::Ar(ar), false, pkt);
                }
            }
            SigRoute::ArWired { from, to } => {
                self.wired_send(NodeId::Ar(from), NodeId::Ar(to), pkt);
            }
        }
    }

    /// Clear the outstanding exchange once its response arrived.
    pub fn mr_clear_pending(&mut self, m: u16) {
        self.mrs[m as usize].pending = None;
    }

    fn handle_mr_retx(&mut self, m: u16, token: u64) {
        let Some(pending) = self.mrs[m as usize].pending.clone() else { return };
        if pending.token != token {
            return;
        }
        if pending.attempts + 1 >= self.p.scenario.protocol.retransmit_max {
            // Exchange abandoned; the handover stalls until geometry or a
            // later trigger resolves it.
            self.mrs[m as usize].pending = None;
            return;
        }
        let mut p = pending;
        p.attempts += 1;
        self.count_retransmission(m);
        self.count_signaling(
            m,
            p.phase,
            match p.pkt.kind {
                PacketKind::Signaling(k) => k,
                PacketKind::Data => unreachable!(),
            },
        );
        let route = p.route;
        let pkt = p.pkt.clone();
        let est = p.rtt_estimate;
        let token = p.token;
        self.mrs[m as usize].pending = Some(p);
        self.schedule_timer(self.now + est, NodeId::Mr(m), TimerKind::Retx { token });
        self.mr_transmit(m, route, pkt);
    }

    fn handle_ar_retx(&mut self, i: u16, token: u64) {
        let found = self.ars[i as usize]
            .pending
            .iter()
            .find(|(_, p)| p.token == token)
            .map(|(&m, p)| (m, p.clone()));
        let Some((m, mut p)) = found else { return };
        if p.attempts + 1 >= self.p.scenario.protocol.retransmit_max {
            self.ars[i as usize].pending.remove(&m);
            return;
        }
        p.attempts += 1;
        self.count_retransmission(m);
        self.count_signaling(
            m,
            p.phase,
            match p.pkt.kind {
                PacketKind::Signaling(k) => k,
                PacketKind::Data => unreachable!(),
            },
        );
        let route = p.route;
        let pkt = p.pkt.clone();
        let est = p.rtt_estimate;
        self.schedule_timer(self.now + est, NodeId::Ar(i), TimerKind::Retx { token });
        self.ars[i as usize].pending.insert(m, p);
        match route {
            SigRoute::ArWired { from, to } => self.wired_send(NodeId::Ar(from), NodeId::Ar(to), pkt),
            _ => unreachable!("router exchanges are wired"),
        }
    }

    // ------------------------------------------------------------------
    // Timers
    // ------------------------------------------------------------------

    fn handle_timer(&mut self, node: NodeId, kind: TimerKind) {
        match (node, kind) {
            (NodeId::Mr(m), TimerKind::OverlapEnter { boundary }) => {
                self.cleanup_boundary_state(m, boundary);
                match self.p.protocol {
                    Protocol::MultiMr => proto_multimr::on_overlap_enter(self, m, boundary),
                    Protocol::Fmipv6 => proto_fmipv6::on_overlap_enter(self, m, boundary),
                }
            }
            (NodeId::Mr(m), TimerKind::CoverageExit { boundary }) => match self.p.protocol {
                Protocol::MultiMr => proto_multimr::on_coverage_exit(self, m, boundary),
                Protocol::Fmipv6 => proto_fmipv6::on_coverage_exit(self, m, boundary),
            },
            (NodeId::Mr(m), TimerKind::Retx { token }) => self.handle_mr_retx(m, token),
            (NodeId::Mr(m), TimerKind::MultiSettleDone) => proto_multimr::on_settle_done(self, m),
            (NodeId::Mr(m), TimerKind::SwitchDone) => match self.p.protocol {
                Protocol::MultiMr => proto_multimr::on_switch_done(self, m),
                Protocol::Fmipv6 => proto_fmipv6::on_switch_done(self, m),
            },
            (NodeId::Ar(i), TimerKind::ArBeacon) => self.handle_beacon(i),
            (NodeId::Ar(i), TimerKind::Retx { token }) => self.handle_ar_retx(i, token),
            (NodeId::Ar(i), TimerKind::FmipDivertOn { mr }) => {
                proto_fmipv6::on_divert_install(self, i, mr)
            }
            (NodeId::Ar(i), TimerKind::ReseqTimeout { mr }) => self.handle_reseq_timeout(i, mr),
            (NodeId::Ha(h), TimerKind::RemoveBinding { ha, hoa }) => {
                debug_assert_eq!(h, ha);
                self.has[ha as usize].cache.remove(&hoa);
            }
            _ => {}
        }
    }

    fn handle_beacon(&mut self, i: u16) {
        // Unsolicited advertisement; attachment decisions are geometric, so
        // the beacon only keeps the advertised-prefix state fresh.
        let interval = self.p.scenario.protocol.required_interval_s;
        let next = self.now + interval;
        if next < self.p.scenario.run.duration_s {
            self.schedule_timer(next, NodeId::Ar(i), TimerKind::ArBeacon);
        }
    }

    fn cleanup_boundary_state(&mut self, m: u16, boundary: u16) {
        for delta in 0..2u16 {
            let i = boundary + delta;
            if (i as usize) < self.ars.len() {
                self.ars[i as usize].divert.remove(&m);
                if let Some(buf) = self.ars[i as usize].buffering.remove(&m) {
                    for pkt in buf {
                        self.on_packet_lost(pkt, LossClass::Buffer);
                    }
                }
                self.ars[i as usize].reseq.remove(&m);
            }
        }
    }

    // ------------------------------------------------------------------
    // Attachment state changes used by both protocols
    // ------------------------------------------------------------------

    pub fn mr_detach(&mut self, m: u16) {
        self.mrs[m as usize].radio_attached = false;
    }

    pub fn mr_attach(&mut self, m: u16, ar: u16) {
        let mr = &mut self.mrs[m as usize];
        mr.attached_ar = Some(ar);
        mr.radio_attached = true;
        mr.last_attach_time = self.now;
    }

    // ------------------------------------------------------------------
    // Finalization
    // ------------------------------------------------------------------

    fn finalize(&mut self) {
        // Anything still parked in a buffer at the quiescent end is lost.
        for m in 0..self.mrs.len() {
            let buf = std::mem::take(&mut self.mrs[m].relay_buf);
            for pkt in buf {
                self.on_packet_lost(pkt, LossClass::Buffer);
            }
        }
        for i in 0..self.ars.len() {
            let bufs = std::mem::take(&mut self.ars[i].buffering);
            for (_, buf) in bufs {
                for pkt in buf {
                    self.on_packet_lost(pkt, LossClass::Buffer);
                }
            }
            let reseqs = std::mem::take(&mut self.ars[i].reseq);
            for (_, rs) in reseqs {
                for (_, pkt) in rs.held {
                    self.on_packet_lost(pkt, LossClass::Buffer);
                }
            }
        }
    }

    pub fn into_report(self) -> RunReport {
        RunReport {
            protocol: self.p.protocol,
            backbone_latency_s: self.p.backbone_latency_s,
            seed: self.p.seed,
            duration_s: self.p.scenario.run.duration_s,
            vehicles: self.p.scenario.vehicles.count,
            flows: self.flows,
            handovers: self.records,
            hard_breaks: self.hard_breaks,
            fmip_predictive: self.fmip_predictive,
            fmip_reactive: self.fmip_reactive,
            signaling: self.sig,
            delivered_data_bytes: self.delivered_data_bytes,
            lane_flags: self.lane_flags,
            events_executed: self.events_executed,
            trace_hash: self.trace_hash,
            params: self.p,
        }
    }
}

fn format_trace_line(ev: &Ev) -> String {
    match &ev.kind {
        EvKind::CnEmit { flow } => format!("{:.6} cn-emit flow={}", ev.time, flow),
        EvKind::WiredDeliver { to, pkt } => {
            format!("{:.6} wired {} kind={:?} seq={}", ev.time, to, pkt.kind, pkt.seq)
        }
        EvKind::RadioDeliver { from, to, pkt, .. } => {
            format!("{:.6} radio {}->{} kind={:?} seq={}", ev.time, from, to, pkt.kind, pkt.seq)
        }
        EvKind::Timer { node, kind } => format!("{:.6} timer {} {:?}", ev.time, node, kind),
    }
}

/// Execute one run and produce its report.
pub fn run(params: RunParams) -> Result<RunReport, crate::config::ConfigError> {
    params.scenario.validate()?;
    let mut w = World::new(params);
    w.run_to_completion();
    Ok(w.into_report())
}
