//! Packet-delivery fabric: address registry, latency models, spoofing
//! capability and registered attack floods.
//!
//! High-rate spoofed bursts are carried as *flood descriptors* rather than
//! per-packet events: a flood drains the target's rate-limit buckets
//! analytically when genuine packets arrive (see [`crate::ratelimit`]).
//! This keeps multi-million-packet bursts tractable while preserving the
//! token-bucket arithmetic that genuine traffic sees.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::net::{Addr, NodeId, Packet, PacketKind};
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum LatencyModel {
    Zero,
    Fixed { ms: u64 },
    Uniform { min_ms: u64, max_ms: u64 },
}

impl LatencyModel {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> SimDuration {
        match *self {
            LatencyModel::Zero => SimDuration::ZERO,
            LatencyModel::Fixed { ms } => SimDuration::from_millis(ms),
            LatencyModel::Uniform { min_ms, max_ms } => {
                SimDuration::from_millis(rng.gen_range(min_ms..=max_ms))
            }
        }
    }
}

impl Default for LatencyModel {
    // No source states link latencies; outcomes depend on relative
    // timing at much coarser scales, so a fixed 10 ms one-way default.
    fn default() -> Self {
        LatencyModel::Fixed { ms: 10 }
    }
}

/// A spoofed burst against one destination address, keyed to the spoofed
/// client address whose buckets it drains.
#[derive(Clone, Debug)]
pub struct Flood {
    pub dst: Addr,
    pub spoofed_src: Addr,
    pub kind: PacketKind,
    pub rate_per_s: f64,
    pub start: SimTime,
    pub end: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    /// Delivery event should be scheduled at this time.
    Deliver(SimTime, NodeId),
    /// Destination is not a registered node.
    Blackholed,
}

#[derive(Default)]
pub struct Fabric {
    nodes: BTreeMap<Addr, NodeId>,
    names: BTreeMap<NodeId, String>,
    spoof_capable: BTreeMap<NodeId, bool>,
    pub default_latency: LatencyModel,
    floods: Vec<Flood>,
    pub sent: u64,
    pub blackholed: u64,
}

impl Fabric {
    pub fn new(default_latency: LatencyModel) -> Self {
        Fabric {
            default_latency,
            ..Default::default()
        }
    }

    pub fn register(&mut self, addr: Addr, node: NodeId, name: &str, can_spoof: bool) {
        self.nodes.insert(addr, node);
        self.names.insert(node, name.to_string());
        self.spoof_capable.insert(node, can_spoof);
    }

    pub fn node_at(&self, addr: Addr) -> Option<NodeId> {
        self.nodes.get(&addr).copied()
    }

    pub fn name(&self, node: NodeId) -> &str {
        self.names.get(&node).map(String::as_str).unwrap_or("?")
    }

    pub fn addr_of(&self, node: NodeId) -> Option<Addr> {
        self.nodes
            .iter()
            .find(|(_, n)| **n == node)
            .map(|(a, _)| *a)
    }

    /// Decides the fate of a packet. The caller owns the engine and
    /// schedules the delivery event (and logs blackholes) itself.
    pub fn route(
        &mut self,
        now: SimTime,
        packet: &Packet,
        src_node_addr: Addr,
        latency: Option<LatencyModel>,
        rng: &mut ChaCha8Rng,
    ) -> SendOutcome {
        assert!(
            packet.src == src_node_addr
                || self
                    .spoof_capable
                    .get(&packet.true_origin)
                    .copied()
                    .unwrap_or(false),
            "node {} sent with spoofed src {} without the spoofing capability",
            self.name(packet.true_origin),
            packet.src,
        );
        assert!(packet.size_bytes > 0, "zero-size packet");
        self.sent += 1;
        match self.nodes.get(&packet.dst) {
            Some(node) => {
                let latency = latency.unwrap_or(self.default_latency);
                SendOutcome::Deliver(now + latency.sample(rng), *node)
            }
            None => {
                self.blackholed += 1;
                SendOutcome::Blackholed
            }
        }
    }

    pub fn register_flood(&mut self, flood: Flood) {
        self.floods.push(flood);
    }

    /// Total active flood rate draining buckets keyed to `client` at `dst`.
    pub fn flood_rate(&self, dst: Addr, client: Addr, kind: PacketKind, at: SimTime) -> f64 {
        self.floods
            .iter()
            .filter(|f| {
                f.dst == dst
                    && f.spoofed_src == client
                    && f.kind == kind
                    && f.start <= at
                    && at < f.end
            })
            .map(|f| f.rate_per_s)
            .sum()
    }

    /// Drops floods that ended before `now` to keep lookups cheap.
    pub fn expire_floods(&mut self, now: SimTime) {
        self.floods.retain(|f| f.end > now);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Payload;
    use rand_chacha::rand_core::SeedableRng;

    fn packet(src: Addr, dst: Addr) -> Packet {
        Packet {
            src,
            true_origin: NodeId(0),
            dst,
            kind: PacketKind::DnsQuery,
            payload: Payload::Empty,
            size_bytes: 64,
            sent_at: SimTime::ZERO,
        }
    }

    #[test]
    fn zero_latency_delivers_now() {
        let mut f = Fabric::new(LatencyModel::Zero);
        let a = Addr::new(10, 0, 0, 1);
        let b = Addr::new(10, 0, 0, 2);
        f.register(a, NodeId(0), "a", false);
        f.register(b, NodeId(1), "b", false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let now = SimTime::from_secs(7);
        match f.route(now, &packet(a, b), a, None, &mut rng) {
            SendOutcome::Deliver(at, node) => {
                assert_eq!(at, now);
                assert_eq!(node, NodeId(1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fixed_latency_adds_exactly() {
        let mut f = Fabric::new(LatencyModel::Fixed { ms: 10 });
        let a = Addr::new(10, 0, 0, 1);
        let b = Addr::new(10, 0, 0, 2);
        f.register(a, NodeId(0), "a", false);
        f.register(b, NodeId(1), "b", false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        match f.route(SimTime::ZERO, &packet(a, b), a, None, &mut rng) {
            SendOutcome::Deliver(at, _) => assert_eq!(at, SimTime(10)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_destination_blackholes() {
        let mut f = Fabric::new(LatencyModel::Zero);
        let a = Addr::new(10, 0, 0, 1);
        f.register(a, NodeId(0), "a", false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = f.route(
            SimTime::ZERO,
            &packet(a, Addr::new(203, 0, 113, 9)),
            a,
            None,
            &mut rng,
        );
        assert_eq!(out, SendOutcome::Blackholed);
        assert_eq!(f.blackholed, 1);
    }

    #[test]
    #[should_panic(expected = "spoofed")]
    fn spoofing_requires_capability() {
        let mut f = Fabric::new(LatencyModel::Zero);
        let a = Addr::new(10, 0, 0, 1);
        let b = Addr::new(10, 0, 0, 2);
        f.register(a, NodeId(0), "a", false);
        f.register(b, NodeId(1), "b", false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let _ = f.route(SimTime::ZERO, &packet(b, b), a, None, &mut rng);
    }

    // Law-of-large-numbers check: uniform(5ms, 15ms) over 1e5 samples has
    // an empirical mean within 0.1 ms of 10 ms.
    #[test]
    fn uniform_latency_mean() {
        let model = LatencyModel::Uniform {
            min_ms: 5,
            max_ms: 15,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let n = 100_000;
        let total: u64 = (0..n).map(|_| model.sample(&mut rng).as_millis()).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 10.0).abs() < 0.1, "mean {mean}");
    }
}
