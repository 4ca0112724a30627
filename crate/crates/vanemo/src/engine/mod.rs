//! Deterministic discrete-event core: clock, ordered event queue, link
//! delays and the packet-conservation ledger.
//!
//! Events execute in `(time, sequence)` order; the sequence number is
//! assigned when the event is scheduled, so identical inputs replay an
//! identical event stream. A digest of that stream is part of the run
//! report and doubles as the determinism check.

mod world;

pub use world::{run, DeliveredInfo, World};

use crate::addressing::{Address, NodeId, Packet};
use std::cmp::Ordering;

/// Delayed protocol steps and housekeeping.
#[derive(Debug, Clone, PartialEq)]
pub enum TimerKind {
    /// Vehicle reaches the joint-coverage entry of `boundary`.
    OverlapEnter { boundary: u16 },
    /// Vehicle leaves the old router's coverage on this boundary.
    CoverageExit { boundary: u16 },
    /// Unsolicited router advertisement beacon.
    ArBeacon,
    /// Retransmission deadline for a pending exchange.
    Retx { token: u64 },
    /// Old link teardown for a make-before-break handover.
    MultiSettleDone,
    /// Radio switch finished; attach to the pending router.
    SwitchDone,
    /// Remove the superseded home binding after outstanding packets drain.
    RemoveBinding { ha: u8, hoa: Address },
    /// Activate the forwarding tunnel installed after a handover-initiate
    /// acknowledgment (baseline).
    FmipDivertOn { mr: u16 },
    /// Release held out-of-order packets (baseline resequencer).
    ReseqTimeout { mr: u16 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvKind {
    /// Constant-bit-rate source tick for one flow.
    CnEmit { flow: u16 },
    WiredDeliver { to: NodeId, pkt: Packet },
    RadioDeliver {
        from: NodeId,
        to: NodeId,
        /// Transmission start time, for the attachment-span check.
        departed: f64,
        /// Set when an access router transmits a packet it received through
        /// the inter-router forwarding tunnel or its handover buffer.
        via_tunnel: bool,
        pkt: Packet,
    },
    Timer { node: NodeId, kind: TimerKind },
}

#[derive(Debug, Clone)]
pub struct Ev {
    pub time: f64,
    pub seq: u64,
    pub kind: EvKind,
}

impl PartialEq for Ev {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Ev {}

impl PartialOrd for Ev {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ev {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

/// FNV-1a, used to digest the executed event stream.
pub fn fnv1a(hash: u64, value: u64) -> u64 {
    let mut h = hash;
    for b in value.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

pub fn node_code(n: NodeId) -> u64 {
    match n {
        NodeId::Cn => 0,
        NodeId::Ha(h) => 1 + h as u64,
        NodeId::Ar(i) => 10 + i as u64,
        NodeId::Mr(i) => 10_000 + i as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_order_by_time_then_seq() {
        let a = Ev { time: 1.0, seq: 5, kind: EvKind::CnEmit { flow: 0 } };
        let b = Ev { time: 1.0, seq: 6, kind: EvKind::CnEmit { flow: 1 } };
        let c = Ev { time: 0.5, seq: 9, kind: EvKind::CnEmit { flow: 2 } };
        assert!(c < a && a < b);
    }

    #[test]
    fn fnv_differs_on_order() {
        let h1 = fnv1a(fnv1a(FNV_OFFSET, 1), 2);
        let h2 = fnv1a(fnv1a(FNV_OFFSET, 2), 1);
        assert_ne!(h1, h2);
    }
}
