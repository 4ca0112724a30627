//! Addresses, prefixes, binding caches and packet encapsulation.
//!
//! Addresses are symbolic `prefix:host` pairs rather than 128-bit IPv6
//! addresses: the handover schemes only ever depend on prefix identity and
//! on which binding maps a home address to a care-of address, never on bit
//! layout. A packet carries a stack of at most two encapsulation headers;
//! level two only ever appears on the home-agent-to-home-agent leg of a
//! re-established tunnel and on the access-router forwarding tunnel of the
//! fast-handover baseline.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Fixed IPv6-sized header cost added per encapsulation level.
pub const ENCAP_HEADER_BYTES: u32 = 40;

/// Maximum nesting the data plane tolerates before flagging a routing bug.
pub const MAX_ENCAP_DEPTH: usize = 2;

/// Network prefix identifier. Stands in for a /64.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Prefix {
    /// Subnet advertised by access router `ar` on its wireless interface.
    ArNet(u16),
    /// Home network prefix owned by home agent `ha` (0 or 1).
    HomeNet(u8),
    /// Mobile network prefix advertised by mobile router `mr` on its ingress
    /// interface; `epoch` distinguishes successive delegations.
    Mnp { mr: u16, epoch: u32 },
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prefix::ArNet(i) => write!(f, "AR{i}-net"),
            Prefix::HomeNet(h) => write!(f, "HA{}-net", h + 1),
            Prefix::Mnp { mr, epoch } => write!(f, "MR{mr}-MNP.{epoch}"),
        }
    }
}

/// Interface identifier half of an address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Host {
    Cn,
    Ha(u8),
    Ar(u16),
    Mr(u16),
}

impl fmt::Display for Host {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Host::Cn => write!(f, "CN"),
            Host::Ha(h) => write!(f, "HA{}", h + 1),
            Host::Ar(i) => write!(f, "AR{i}"),
            Host::Mr(i) => write!(f, "MR{i}"),
        }
    }
}

/// Whether an address was assigned as a home address or configured as a
/// care-of address. Recorded once at construction and immutable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AddrRole {
    Home,
    CareOf,
    /// Infrastructure address of a fixed node (CN, HA, AR).
    Fixed,
}

/// Symbolic network address, displayed as `prefix:host`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Address {
    pub prefix: Prefix,
    pub host: Host,
    pub role: AddrRole,
}

impl Address {
    pub fn home(prefix: Prefix, host: Host) -> Self {
        Address { prefix, host, role: AddrRole::Home }
    }

    pub fn fixed(prefix: Prefix, host: Host) -> Self {
        Address { prefix, host, role: AddrRole::Fixed }
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.prefix, self.host)
    }
}

/// Configure a care-of address from a currently advertised prefix.
///
/// Host identifiers are node-unique, so the produced pair is unique within a
/// run by construction; the duplicate-address check the protocol still
/// performs on the wire is a timed exchange, not a real collision test.
pub fn configure_coa(prefix: Prefix, host: Host) -> Address {
    Address { prefix, host, role: AddrRole::CareOf }
}

/// Identifiers of simulated nodes, used in route traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Cn,
    Ha(u8),
    Ar(u16),
    Mr(u16),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Cn => write!(f, "CN"),
            NodeId::Ha(h) => write!(f, "HA{}", h + 1),
            NodeId::Ar(i) => write!(f, "AR{i}"),
            NodeId::Mr(i) => write!(f, "MR{i}"),
        }
    }
}

/// Signaling message types of both handover schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MsgKind {
    // Proposed scheme.
    BindingUpdate,
    BindingAck,
    RtSol,
    RtAdv,
    NeighborAdvert,
    NeighborAck,
    // Fast-handover baseline.
    RtSolPr,
    PrRtAdv,
    Fbu,
    HandoverInitiate,
    HandoverAck,
    FBack,
    Fna,
}

impl MsgKind {
    /// On-wire size of the message, header included.
    pub fn size_bytes(self) -> u32 {
        match self {
            MsgKind::BindingUpdate => 56,
            MsgKind::BindingAck => 52,
            MsgKind::RtSol => 48,
            MsgKind::RtAdv => 88,
            MsgKind::NeighborAdvert => 64,
            MsgKind::NeighborAck => 64,
            MsgKind::RtSolPr => 52,
            MsgKind::PrRtAdv => 88,
            MsgKind::Fbu => 56,
            MsgKind::HandoverInitiate => 72,
            MsgKind::HandoverAck => 52,
            MsgKind::FBack => 52,
            MsgKind::Fna => 48,
        }
    }
}

impl fmt::Display for MsgKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            MsgKind::BindingUpdate => "BU",
            MsgKind::BindingAck => "BAck",
            MsgKind::RtSol => "RtSol",
            MsgKind::RtAdv => "RtAdv",
            MsgKind::NeighborAdvert => "NA",
            MsgKind::NeighborAck => "NACK",
            MsgKind::RtSolPr => "RtSolPr",
            MsgKind::PrRtAdv => "PrRtAdv",
            MsgKind::Fbu => "FBU",
            MsgKind::HandoverInitiate => "HI",
            MsgKind::HandoverAck => "HAck",
            MsgKind::FBack => "FBack",
            MsgKind::Fna => "FNA",
        };
        write!(f, "{name}")
    }
}

/// Payload class of a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PacketKind {
    Data,
    Signaling(MsgKind),
}

/// What a binding update is for. Carried inside the message so home agents
/// and the sending router agree on which exchange an acknowledgment closes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BuPurpose {
    /// Redirect traffic to the peer router while between attachments.
    EntryRelay,
    /// Register the new care-of address and mobile network prefix with the
    /// new provider's home agent.
    Register,
    /// Re-establish the tunnel at the previous home agent with the new
    /// care-of address.
    Reestablish,
    /// Baseline home registration after reattachment.
    FmipHome,
}

/// Structured content of signaling messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SigPayload {
    Bu {
        mr: u16,
        hoa: Address,
        coa: Address,
        bu_seq: u64,
        purpose: BuPurpose,
        /// Mobile network prefix to delegate and register (Register only).
        mnp: Option<Prefix>,
        /// Secondary home address assigned by the new provider (Register only).
        hoa2: Option<Address>,
    },
    BAck { mr: u16, ack: BindingAck, purpose: BuPurpose },
    RtSol { mr: u16 },
    RtAdv { mr: u16, prefix: Prefix },
    Na { mr: u16, coa: Address },
    Nack { mr: u16, coa: Address },
    RtSolPr { mr: u16 },
    PrRtAdv { mr: u16, next_ar: u16, prefix: Prefix },
    Fbu { mr: u16, old_ar: u16, new_ar: u16, ncoa: Address },
    Hi { mr: u16, old_ar: u16, new_ar: u16, ncoa: Address },
    HAck { mr: u16, old_ar: u16, new_ar: u16 },
    FBack { mr: u16, new_ar: u16 },
    Fna { mr: u16 },
    Beacon { ar: u16, prefix: Prefix },
}

impl SigPayload {
    pub fn mr(&self) -> u16 {
        match self {
            SigPayload::Bu { mr, .. }
            | SigPayload::BAck { mr, .. }
            | SigPayload::RtSol { mr }
            | SigPayload::RtAdv { mr, .. }
            | SigPayload::Na { mr, .. }
            | SigPayload::Nack { mr, .. }
            | SigPayload::RtSolPr { mr }
            | SigPayload::PrRtAdv { mr, .. }
            | SigPayload::Fbu { mr, .. }
            | SigPayload::Hi { mr, .. }
            | SigPayload::HAck { mr, .. }
            | SigPayload::FBack { mr, .. }
            | SigPayload::Fna { mr } => *mr,
            SigPayload::Beacon { .. } => u16::MAX,
        }
    }
}

/// A simulated packet. `size_bytes` tracks the full on-wire size including
/// any encapsulation headers currently on the stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub kind: PacketKind,
    pub src: Address,
    pub dst: Address,
    pub size_bytes: u32,
    pub seq: u64,
    /// Flow index for data packets (CN flow per mobile router).
    pub flow: Option<u16>,
    /// Encapsulation headers, innermost last is the spec of push order:
    /// the most recently pushed header is the last element and the current
    /// outermost header.
    pub encap_stack: Vec<(Address, Address)>,
    /// Node ids visited, appended by every forwarding hop. Only populated
    /// when trace collection is enabled for the run.
    pub trace: Option<Vec<NodeId>>,
    pub created_at: f64,
    /// Bitmask of home agents that forwarded this packet.
    pub ha_visit_mask: u8,
    /// Highest encapsulation depth the packet carried on any wired leg that
    /// terminated at a mobile router's access link.
    pub max_depth_seen: u8,
    /// Structured signaling content, None for data packets.
    pub sig: Option<SigPayload>,
}

impl Packet {
    pub fn data(src: Address, dst: Address, size_bytes: u32, seq: u64, flow: u16, now: f64) -> Self {
        Packet {
            kind: PacketKind::Data,
            src,
            dst,
            size_bytes,
            seq,
            flow: Some(flow),
            encap_stack: Vec::new(),
            trace: None,
            created_at: now,
            ha_visit_mask: 0,
            max_depth_seen: 0,
            sig: None,
        }
    }

    pub fn signaling(kind: MsgKind, src: Address, dst: Address, sig: SigPayload, now: f64) -> Self {
        Packet {
            kind: PacketKind::Signaling(kind),
            src,
            dst,
            size_bytes: kind.size_bytes(),
            seq: 0,
            flow: None,
            encap_stack: Vec::new(),
            trace: None,
            created_at: now,
            ha_visit_mask: 0,
            max_depth_seen: 0,
            sig: Some(sig),
        }
    }

    /// Destination of the outermost header, or the inner destination when
    /// the packet is not tunneled.
    pub fn outer_dst(&self) -> Address {
        self.encap_stack.last().map(|(_, d)| *d).unwrap_or(self.dst)
    }

    /// Source of the outermost header, or the inner source when untunneled.
    pub fn outer_src(&self) -> Address {
        self.encap_stack.last().map(|(s, _)| *s).unwrap_or(self.src)
    }

    pub fn depth(&self) -> usize {
        self.encap_stack.len()
    }

    pub fn push_trace(&mut self, node: NodeId) {
        if let Some(t) = self.trace.as_mut() {
            t.push(node);
        }
    }
}

/// Errors of the packet data plane.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PacketError {
    #[error("encapsulation depth would exceed {MAX_ENCAP_DEPTH}")]
    DepthExceeded,
    #[error("packet is not tunneled")]
    NotTunneled,
    #[error("decapsulating node {node} is not the tunnel endpoint {endpoint}")]
    WrongEndpoint { node: String, endpoint: String },
}

/// Push an encapsulation header onto the packet.
pub fn encapsulate(mut p: Packet, outer_src: Address, outer_dst: Address) -> Result<Packet, PacketError> {
    if p.encap_stack.len() >= MAX_ENCAP_DEPTH {
        return Err(PacketError::DepthExceeded);
    }
    p.encap_stack.push((outer_src, outer_dst));
    p.size_bytes += ENCAP_HEADER_BYTES;
    p.max_depth_seen = p.max_depth_seen.max(p.encap_stack.len() as u8);
    Ok(p)
}

/// Pop the outermost header at the node owning `node_addr`.
pub fn decapsulate(mut p: Packet, node_addr: Address) -> Result<Packet, PacketError> {
    match p.encap_stack.last() {
        None => Err(PacketError::NotTunneled),
        Some((_, outer_dst)) => {
            if outer_dst.prefix != node_addr.prefix || outer_dst.host != node_addr.host {
                return Err(PacketError::WrongEndpoint {
                    node: node_addr.to_string(),
                    endpoint: outer_dst.to_string(),
                });
            }
            p.encap_stack.pop();
            p.size_bytes -= ENCAP_HEADER_BYTES;
            Ok(p)
        }
    }
}

/// One entry of a home agent's binding cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub coa: Address,
    pub registered_at: f64,
    pub tunnel_peer: NodeId,
    /// Sequence number of the binding update that installed this entry,
    /// used to discard stale acknowledgments.
    pub bu_seq: u64,
}

/// Acknowledgment returned for a processed binding update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BindingAck {
    pub hoa: Address,
    pub coa: Address,
    pub bu_seq: u64,
    pub processed_at: f64,
}

/// Per-home-agent map from home address to the active care-of address.
/// At most one care-of address per home address; an update atomically
/// replaces the previous entry.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BindingCache {
    entries: std::collections::BTreeMap<Address, Binding>,
}

impl BindingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lookup(&self, hoa: &Address) -> Option<&Binding> {
        self.entries.get(hoa)
    }

    pub fn remove(&mut self, hoa: &Address) -> Option<Binding> {
        self.entries.remove(hoa)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Address, &Binding)> {
        self.entries.iter()
    }
}

/// Install or replace the binding for `hoa`, returning the acknowledgment.
pub fn process_binding_update(
    cache: &mut BindingCache,
    hoa: Address,
    new_coa: Address,
    tunnel_peer: NodeId,
    bu_seq: u64,
    now: f64,
) -> BindingAck {
    cache.entries.insert(
        hoa,
        Binding { coa: new_coa, registered_at: now, tunnel_peer, bu_seq },
    );
    BindingAck { hoa, coa: new_coa, bu_seq, processed_at: now }
}

/// Verdict of an ingress filter check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterVerdict {
    Pass,
    Drop,
}

/// Ingress filtering on the outermost source prefix.
///
/// `allowed` lists the prefixes belonging to the domain the packet claims to
/// originate from; a disabled filter always passes.
pub fn ingress_filter(p: &Packet, allowed: &[Prefix], enabled: bool) -> FilterVerdict {
    if !enabled {
        return FilterVerdict::Pass;
    }
    if allowed.contains(&p.outer_src().prefix) {
        FilterVerdict::Pass
    } else {
        FilterVerdict::Drop
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ar_net(i: u16) -> Prefix {
        Prefix::ArNet(i)
    }

    fn data_packet() -> Packet {
        let src = Address::fixed(Prefix::HomeNet(0), Host::Cn);
        let dst = Address::home(Prefix::HomeNet(0), Host::Mr(1));
        Packet::data(src, dst, 400, 7, 1, 0.25)
    }

    #[test]
    fn coa_display_forms() {
        let a = configure_coa(ar_net(2), Host::Mr(1));
        assert_eq!(a.to_string(), "AR2-net:MR1");
        assert_eq!(a.role, AddrRole::CareOf);

        let b = configure_coa(Prefix::Mnp { mr: 1, epoch: 0 }, Host::Mr(2));
        assert_eq!(b.to_string(), "MR1-MNP.0:MR2");

        let c = configure_coa(ar_net(1), Host::Mr(2));
        assert_eq!(c.to_string(), "AR1-net:MR2");
    }

    #[test]
    fn encapsulate_adds_header_overhead() {
        let p = data_packet();
        let ha = Address::fixed(Prefix::HomeNet(0), Host::Ha(0));
        let ip1 = configure_coa(ar_net(1), Host::Mr(2));
        let q = encapsulate(p, ha, ip1).unwrap();
        assert_eq!(q.depth(), 1);
        assert_eq!(q.size_bytes, 440);
    }

    #[test]
    fn second_level_allowed_third_rejected() {
        let ha1 = Address::fixed(Prefix::HomeNet(0), Host::Ha(0));
        let ha2 = Address::fixed(Prefix::HomeNet(1), Host::Ha(1));
        let ip1 = configure_coa(ar_net(1), Host::Mr(2));
        let ip3 = configure_coa(ar_net(2), Host::Mr(1));
        let p = encapsulate(data_packet(), ha1, ip1).unwrap();
        let p = encapsulate(p, ha2, ip3).unwrap();
        assert_eq!(p.depth(), 2);
        assert_eq!(p.size_bytes, 480);
        let err = encapsulate(p, ha1, ip1).unwrap_err();
        assert_eq!(err, PacketError::DepthExceeded);
    }

    #[test]
    fn decapsulate_round_trip() {
        let p = data_packet();
        let ha = Address::fixed(Prefix::HomeNet(0), Host::Ha(0));
        let ip1 = configure_coa(ar_net(1), Host::Mr(2));
        let q = encapsulate(p.clone(), ha, ip1).unwrap();
        let r = decapsulate(q, ip1).unwrap();
        assert_eq!(r, p);
        assert_eq!(r.size_bytes, 400);
    }

    #[test]
    fn decapsulate_errors() {
        let p = data_packet();
        assert_eq!(decapsulate(p.clone(), p.dst).unwrap_err(), PacketError::NotTunneled);

        let ha = Address::fixed(Prefix::HomeNet(0), Host::Ha(0));
        let ip1 = configure_coa(ar_net(1), Host::Mr(2));
        let other = configure_coa(ar_net(1), Host::Mr(3));
        let q = encapsulate(p, ha, ip1).unwrap();
        assert!(matches!(
            decapsulate(q, other).unwrap_err(),
            PacketError::WrongEndpoint { .. }
        ));
    }

    #[test]
    fn binding_update_replaces_and_is_idempotent() {
        let mut cache = BindingCache::new();
        let ip2 = Address::home(Prefix::HomeNet(0), Host::Mr(1));
        let ip1 = configure_coa(ar_net(1), Host::Mr(2));
        let ip3 = configure_coa(ar_net(2), Host::Mr(1));

        process_binding_update(&mut cache, ip2, ip1, NodeId::Mr(2), 1, 1.0);
        assert_eq!(cache.lookup(&ip2).unwrap().coa, ip1);
        assert_eq!(cache.len(), 1);

        process_binding_update(&mut cache, ip2, ip3, NodeId::Mr(1), 2, 2.0);
        assert_eq!(cache.lookup(&ip2).unwrap().coa, ip3);
        assert_eq!(cache.len(), 1);

        let before = cache.lookup(&ip2).unwrap().coa;
        process_binding_update(&mut cache, ip2, ip3, NodeId::Mr(1), 3, 3.0);
        assert_eq!(cache.lookup(&ip2).unwrap().coa, before);
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn ingress_filter_examples() {
        let mnp = Prefix::Mnp { mr: 1, epoch: 3 };
        let src = configure_coa(mnp, Host::Mr(2));
        let dst = Address::fixed(Prefix::HomeNet(0), Host::Ha(0));
        let sig = SigPayload::RtSol { mr: 2 };
        let mut p = Packet::signaling(MsgKind::BindingUpdate, src, dst, sig, 0.0);
        assert_eq!(ingress_filter(&p, &[mnp], true), FilterVerdict::Pass);

        p.src = configure_coa(ar_net(1), Host::Mr(2));
        assert_eq!(ingress_filter(&p, &[mnp], true), FilterVerdict::Drop);
        assert_eq!(ingress_filter(&p, &[mnp], false), FilterVerdict::Pass);
    }

    #[test]
    fn signaling_sizes_are_fixed() {
        assert_eq!(MsgKind::BindingUpdate.size_bytes(), 56);
        assert_eq!(MsgKind::RtAdv.size_bytes(), 88);
        assert_eq!(
            Packet::signaling(
                MsgKind::Fna,
                configure_coa(ar_net(2), Host::Mr(0)),
                Address::fixed(ar_net(2), Host::Ar(2)),
                SigPayload::Fna { mr: 0 },
                0.0
            )
            .size_bytes,
            48
        );
    }
}
