//! Per-handover records and the full run report. Every evaluation metric is
//! derived from these; nothing is measured outside them.

use crate::config::{Protocol, RunParams};
use crate::mobility::LaneFlag;
use serde::{Deserialize, Serialize};

/// Protocol phases of the proposed scheme, in their mandatory order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MrPhase {
    Attached,
    OverlapDetected,
    TunnelViaPeer,
    CoaConfiguring,
    Ha2Registering,
    AttachedNew,
}

/// How a handover obtained connectivity while between routers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntryKind {
    /// Traffic redirected to the peer's plain care-of address (peer still on
    /// the old router).
    PlainRelay,
    /// Care-of address configured from the peer's advertised mobile network
    /// prefix; traffic rides the two-level tunnel through both home agents.
    PeerMnp,
    /// No usable peer; the router breaks connectivity until reattachment.
    HardBreak,
    /// Baseline modes.
    FmipPredictive,
    FmipReactive,
}

/// Signaling phases a handover's messages are attributed to.
pub const PHASE_ENTRY: usize = 0;
pub const PHASE_ATTACH: usize = 1;
pub const PHASE_REESTABLISH: usize = 2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HandoverRecord {
    pub mr_id: u16,
    /// Index of the router boundary being crossed (old router index).
    pub boundary: u16,
    pub entry_kind: EntryKind,
    pub speed_mps: f64,
    /// Geometric overlap chord / speed for this vehicle and boundary.
    pub t_hp_geometric: f64,
    pub t_overlap_enter: f64,
    pub t_last_pkt_old_path: Option<f64>,
    pub t_first_pkt_new_path: Option<f64>,
    pub t_handover_complete: Option<f64>,
    pub signaling_msgs: u32,
    pub signaling_bytes: u64,
    /// Message counts split by phase: entry redirect / attachment and
    /// registration / tunnel re-establishment.
    pub phase_msgs: [u32; 3],
    pub retransmissions: u32,
    pub pkts_lost: u32,
    pub pkts_via_peer: u32,
    /// Data packets delivered inside the handover window with a two-level
    /// encapsulation on their final wired leg.
    pub depth2_deliveries: u32,
    /// Data packets delivered inside the window that were forwarded by two
    /// distinct home agents.
    pub two_ha_deliveries: u32,
    /// Phase transition history, for order checking.
    pub phases: Vec<MrPhase>,
}

impl HandoverRecord {
    pub fn new(
        mr_id: u16,
        boundary: u16,
        entry_kind: EntryKind,
        speed_mps: f64,
        t_hp_geometric: f64,
        now: f64,
    ) -> Self {
        HandoverRecord {
            mr_id,
            boundary,
            entry_kind,
            speed_mps,
            t_hp_geometric,
            t_overlap_enter: now,
            t_last_pkt_old_path: None,
            t_first_pkt_new_path: None,
            t_handover_complete: None,
            signaling_msgs: 0,
            signaling_bytes: 0,
            phase_msgs: [0; 3],
            retransmissions: 0,
            pkts_lost: 0,
            pkts_via_peer: 0,
            depth2_deliveries: 0,
            two_ha_deliveries: 0,
            phases: vec![MrPhase::OverlapDetected],
        }
    }

    pub fn complete(&self) -> bool {
        self.t_handover_complete.is_some()
    }
}

/// Per-flow packet conservation counters. The identity
/// `sent = delivered + lost_range + lost_link + lost_buffer + dropped_ingress + in_flight`
/// must hold at every instant and with `in_flight = 0` once the run drains.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowCounters {
    pub sent: u64,
    pub delivered: u64,
    pub lost_range: u64,
    pub lost_link: u64,
    pub lost_buffer: u64,
    pub dropped_ingress: u64,
    pub in_flight: u64,
}

impl FlowCounters {
    pub fn conserved(&self) -> bool {
        self.sent
            == self.delivered
                + self.lost_range
                + self.lost_link
                + self.lost_buffer
                + self.dropped_ingress
                + self.in_flight
    }

    pub fn total_lost(&self) -> u64 {
        self.lost_range + self.lost_link + self.lost_buffer + self.dropped_ingress
    }
}

/// Network-wide signaling accounting: message bytes are counted once per
/// message, encapsulation overhead once per header pushed onto a data
/// packet.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalingTotals {
    pub messages: u64,
    pub message_bytes: u64,
    pub encap_overhead_bytes: u64,
    pub retransmissions: u64,
    pub ingress_drops: u64,
}

impl SignalingTotals {
    pub fn overhead_bytes(&self) -> u64 {
        self.message_bytes + self.encap_overhead_bytes
    }
}

/// Everything one deterministic run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub protocol: Protocol,
    pub backbone_latency_s: f64,
    pub seed: u64,
    pub duration_s: f64,
    pub vehicles: u16,
    pub flows: Vec<FlowCounters>,
    pub handovers: Vec<HandoverRecord>,
    pub hard_breaks: u32,
    pub fmip_predictive: u32,
    pub fmip_reactive: u32,
    pub signaling: SignalingTotals,
    pub delivered_data_bytes: u64,
    pub lane_flags: Vec<LaneFlag>,
    pub events_executed: u64,
    /// FNV-1a digest over the executed event stream.
    pub trace_hash: u64,
    pub params: RunParams,
}

impl RunReport {
    pub fn completed_handovers(&self) -> impl Iterator<Item = &HandoverRecord> {
        self.handovers.iter().filter(|h| h.complete())
    }

    pub fn total_lost(&self) -> u64 {
        self.flows.iter().map(|f| f.total_lost()).sum()
    }

    pub fn total_sent(&self) -> u64 {
        self.flows.iter().map(|f| f.sent).sum()
    }

    pub fn total_delivered(&self) -> u64 {
        self.flows.iter().map(|f| f.delivered).sum()
    }
}
