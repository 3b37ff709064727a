//! Minimal BGP/ROV layer: announcements, route-origin validation states,
//! an IXP route server with LOCAL_PREF preference, hijack evaluation, and
//! the bidirectional reachability predicate used by victim identification.
//!
//! Topologies are tens of ASes declared statically; BGP converges instantly
//! between events (the attacks operate at RPKI timescales, not convergence
//! timescales).

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::net::{Addr, Asn, Prefix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vrp {
    pub prefix: Prefix,
    pub max_len: u8,
    pub asn: Asn,
}

/// Validated ROA payloads exported by one relying party, plus the deny-set
/// used by the strict-invalid-on-missing mitigation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VrpSet {
    pub entries: BTreeSet<Vrp>,
    /// prefixes whose ROAs could not be located; only populated under the
    /// strict mitigation, where they classify as invalid instead of unknown
    pub denied: BTreeSet<Prefix>,
    pub version: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouteState {
    Valid,
    Invalid,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnedFrom {
    RouteServer,
    DirectPeer,
    Upstream,
}

impl LearnedFrom {
    /// IXP route-server routes get priority via LOCAL_PREF.
    pub fn default_local_pref(self) -> i64 {
        match self {
            LearnedFrom::RouteServer => 200,
            LearnedFrom::DirectPeer => 100,
            LearnedFrom::Upstream => 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Announcement {
    pub prefix: Prefix,
    pub origin_asn: Asn,
    pub as_path: Vec<Asn>,
    pub learned_from: LearnedFrom,
    pub local_pref: i64,
}

impl Announcement {
    pub fn originate(prefix: Prefix, origin: Asn) -> Self {
        Announcement {
            prefix,
            origin_asn: origin,
            as_path: vec![origin],
            learned_from: LearnedFrom::DirectPeer,
            local_pref: LearnedFrom::DirectPeer.default_local_pref(),
        }
    }
}

/// RFC 6811 semantics: no covering VRP → unknown (or invalid when the
/// prefix is in the strict deny-set); covering VRP with matching origin and
/// length within max_len → valid; covering otherwise → invalid.
pub fn classify(a: &Announcement, vrps: &VrpSet) -> RouteState {
    let covering: Vec<&Vrp> = vrps
        .entries
        .iter()
        .filter(|v| v.prefix.covers(&a.prefix))
        .collect();
    if covering.is_empty() {
        if vrps.denied.iter().any(|p| p.covers(&a.prefix)) {
            return RouteState::Invalid;
        }
        return RouteState::Unknown;
    }
    if covering
        .iter()
        .any(|v| v.asn == a.origin_asn && a.prefix.len <= v.max_len)
    {
        RouteState::Valid
    } else {
        RouteState::Invalid
    }
}

/// Deterministic best-path selection: longest prefix, then highest
/// LOCAL_PREF, then shortest AS path, then lowest origin ASN.
pub fn best_path<'a>(candidates: &'a [Announcement]) -> &'a Announcement {
    assert!(!candidates.is_empty());
    candidates
        .iter()
        .min_by_key(|a| {
            (
                std::cmp::Reverse(a.prefix.len),
                std::cmp::Reverse(a.local_pref),
                a.as_path.len(),
                a.origin_asn.0,
            )
        })
        .expect("non-empty")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    /// both ends are IXP members behind the route server
    RouteServer,
    Peer,
    /// first AS is the customer, second the upstream provider
    Transit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsConfig {
    pub asn: Asn,
    pub prefixes: Vec<Prefix>,
    pub addresses: Vec<Addr>,
    /// name of the relying party whose VRPs this AS enforces, if any
    pub rov_rp: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Topology {
    pub ases: BTreeMap<Asn, AsConfig>,
    pub links: Vec<(Asn, Asn, LinkKind)>,
    /// the route server's RP, when the IXP enforces strict filtering
    pub route_server_rp: Option<String>,
}

impl Topology {
    pub fn as_of_addr(&self, addr: Addr) -> Option<Asn> {
        self.ases
            .values()
            .find(|a| a.addresses.contains(&addr) || a.prefixes.iter().any(|p| p.contains(addr)))
            .map(|a| a.asn)
    }

    fn neighbors(&self, asn: Asn) -> Vec<(Asn, LearnedFrom)> {
        let mut out = Vec::new();
        for (a, b, kind) in &self.links {
            let lf = match kind {
                LinkKind::RouteServer => LearnedFrom::RouteServer,
                LinkKind::Peer => LearnedFrom::DirectPeer,
                LinkKind::Transit => LearnedFrom::Upstream,
            };
            if *a == asn {
                out.push((*b, lf));
            } else if *b == asn {
                out.push((*a, lf));
            }
        }
        out
    }
}

/// Per-AS selected routes: (asn, prefix) → chosen announcement.
pub type Ribs = BTreeMap<(Asn, Prefix), Announcement>;

/// Propagates originated announcements across the topology, applying ROV
/// filtering at every enforcing AS and at the route server. `vrps` maps
/// relying-party name → its current VrpSet.
pub fn compute_ribs(
    topology: &Topology,
    origins: &[Announcement],
    vrps: &BTreeMap<String, VrpSet>,
) -> Ribs {
    let mut candidates: BTreeMap<(Asn, Prefix), Vec<Announcement>> = BTreeMap::new();
    let mut ribs: Ribs = BTreeMap::new();
    let mut queue: VecDeque<(Asn, Announcement)> = VecDeque::new();
    for o in origins {
        queue.push_back((o.origin_asn, o.clone()));
    }
    while let Some((asn, ann)) = queue.pop_front() {
        let Some(cfg) = topology.ases.get(&asn) else {
            continue;
        };
        // loop prevention: path convention is receiver-first, origin-last;
        // the receiving AS may only appear at the head
        if ann.as_path[1..].contains(&asn) {
            continue;
        }
        // ROV filtering at the receiving AS
        if asn != ann.origin_asn {
            if let Some(rp) = &cfg.rov_rp {
                if let Some(set) = vrps.get(rp) {
                    if classify(&ann, set) == RouteState::Invalid {
                        continue;
                    }
                }
            }
        }
        let key = (asn, ann.prefix);
        let cands = candidates.entry(key).or_default();
        if cands.contains(&ann) {
            continue;
        }
        cands.push(ann.clone());
        let best = best_path(cands).clone();
        if ribs.get(&key) == Some(&best) {
            continue;
        }
        ribs.insert(key, best.clone());
        for (nbr, lf) in topology.neighbors(asn) {
            if best.as_path.contains(&nbr) {
                continue;
            }
            // route-server strict filtering drops invalid routes before the
            // members ever see them
            if lf == LearnedFrom::RouteServer {
                if let Some(rp) = &topology.route_server_rp {
                    if let Some(set) = vrps.get(rp) {
                        if classify(&best, set) == RouteState::Invalid {
                            continue;
                        }
                    }
                }
            }
            let mut fwd = best.clone();
            fwd.as_path.insert(0, nbr);
            fwd.learned_from = lf;
            fwd.local_pref = lf.default_local_pref();
            queue.push_back((nbr, fwd));
        }
    }
    ribs
}

fn selected_route<'a>(ribs: &'a Ribs, asn: Asn, dst: Addr) -> Option<&'a Announcement> {
    ribs.iter()
        .filter(|((a, p), _)| *a == asn && p.contains(dst))
        .max_by_key(|((_, p), _)| p.len)
        .map(|(_, ann)| ann)
}

fn one_way(topology: &Topology, ribs: &Ribs, s: Addr, d: Addr) -> bool {
    let (Some(src_as), Some(dst_as)) = (topology.as_of_addr(s), topology.as_of_addr(d)) else {
        return false;
    };
    if src_as == dst_as {
        return true;
    }
    // traffic arrives only if the selected route actually originates at the
    // AS owning the destination address
    match selected_route(ribs, src_as, d) {
        Some(ann) => ann.origin_asn == dst_as,
        None => false,
    }
}

/// 1 iff forwarding derived from best_path yields a bidirectional path.
pub fn reachability(topology: &Topology, ribs: &Ribs, s: Addr, d: Addr) -> bool {
    one_way(topology, ribs, s, d) && one_way(topology, ribs, d, s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HijackOutcome {
    Hijacked,
    Filtered,
    NotPreferred,
}

/// Evaluates a bogus announcement at one observer AS: filtered when the
/// observer classifies it invalid; hijacked when it is unknown (or the
/// observer does no ROV) and best-path selects it; not-preferred otherwise.
pub fn hijack_outcome(
    topology: &Topology,
    vrps: &BTreeMap<String, VrpSet>,
    legit_origins: &[Announcement],
    adversary: &Announcement,
    observer: Asn,
) -> HijackOutcome {
    let observer_cfg = topology.ases.get(&observer).expect("observer exists");
    let observer_rp = observer_cfg
        .rov_rp
        .as_ref()
        .or(topology.route_server_rp.as_ref());
    if let Some(set) = observer_rp.and_then(|rp| vrps.get(rp)) {
        if classify(adversary, set) == RouteState::Invalid {
            return HijackOutcome::Filtered;
        }
    }
    let mut origins = legit_origins.to_vec();
    origins.push(adversary.clone());
    let ribs = compute_ribs(topology, &origins, vrps);
    let selected = ribs
        .iter()
        .filter(|((a, p), _)| *a == observer && (p.covers(&adversary.prefix) || adversary.prefix.covers(p)))
        .max_by_key(|((_, p), _)| p.len)
        .map(|(_, ann)| ann);
    match selected {
        Some(ann) if ann.origin_asn == adversary.origin_asn => HijackOutcome::Hijacked,
        _ => HijackOutcome::NotPreferred,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pfx(a: u8, b: u8, c: u8, d: u8, len: u8) -> Prefix {
        Prefix::new(Addr::new(a, b, c, d), len).unwrap()
    }

    fn vrp_set(entries: &[(Prefix, u8, u32)]) -> VrpSet {
        VrpSet {
            entries: entries
                .iter()
                .map(|(p, m, a)| Vrp {
                    prefix: *p,
                    max_len: *m,
                    asn: Asn(*a),
                })
                .collect(),
            denied: BTreeSet::new(),
            version: 1,
        }
    }

    #[test]
    fn classify_rfc6811_cases() {
        let vrps = vrp_set(&[(pfx(10, 0, 0, 0, 22), 24, 64500)]);
        let valid = Announcement::originate(pfx(10, 0, 1, 0, 24), Asn(64500));
        assert_eq!(classify(&valid, &vrps), RouteState::Valid);
        let wrong_origin = Announcement::originate(pfx(10, 0, 1, 0, 24), Asn(64666));
        assert_eq!(classify(&wrong_origin, &vrps), RouteState::Invalid);
        let uncovered = Announcement::originate(pfx(192, 0, 2, 0, 24), Asn(64500));
        assert_eq!(classify(&uncovered, &VrpSet::default()), RouteState::Unknown);
        // too specific: /26 beyond max_len 24
        let too_long = Announcement::originate(pfx(10, 0, 1, 0, 26), Asn(64500));
        assert_eq!(classify(&too_long, &vrps), RouteState::Invalid);
    }

    #[test]
    fn strict_denied_prefix_is_invalid() {
        let mut vrps = VrpSet::default();
        vrps.denied.insert(pfx(10, 0, 0, 0, 22));
        let a = Announcement::originate(pfx(10, 0, 1, 0, 24), Asn(64500));
        assert_eq!(classify(&a, &vrps), RouteState::Invalid);
    }

    #[test]
    fn best_path_ordering() {
        let more_specific = Announcement::originate(pfx(10, 0, 1, 0, 24), Asn(2));
        let less_specific = Announcement::originate(pfx(10, 0, 0, 0, 20), Asn(1));
        assert_eq!(
            best_path(&[less_specific.clone(), more_specific.clone()]),
            &more_specific
        );
        let ixp = Announcement {
            local_pref: 200,
            learned_from: LearnedFrom::RouteServer,
            ..Announcement::originate(pfx(10, 0, 0, 0, 20), Asn(9))
        };
        assert_eq!(best_path(&[less_specific.clone(), ixp.clone()]), &ixp);
        assert_eq!(best_path(&[ixp.clone()]), &ixp);
    }

    fn small_topology(rov: bool) -> (Topology, Vec<Announcement>) {
        // AS1 (victim, owns 10.0.0.0/24) -- AS2 (transit, ROV) -- AS3 (observer)
        let mk = |asn: u32, pfxs: Vec<Prefix>, rp: Option<&str>| AsConfig {
            asn: Asn(asn),
            prefixes: pfxs,
            addresses: vec![],
            rov_rp: rp.map(|s| s.to_string()),
        };
        let mut t = Topology::default();
        t.ases.insert(Asn(1), mk(1, vec![pfx(10, 0, 0, 0, 24)], None));
        t.ases.insert(
            Asn(2),
            mk(2, vec![pfx(172, 16, 0, 0, 24)], if rov { Some("rp") } else { None }),
        );
        t.ases.insert(Asn(3), mk(3, vec![pfx(192, 0, 2, 0, 24)], None));
        t.ases.insert(Asn(666), mk(666, vec![pfx(198, 51, 100, 0, 24)], None));
        t.links = vec![
            (Asn(1), Asn(2), LinkKind::Transit),
            (Asn(2), Asn(3), LinkKind::Transit),
            (Asn(666), Asn(2), LinkKind::Transit),
        ];
        let origins = vec![
            Announcement::originate(pfx(10, 0, 0, 0, 24), Asn(1)),
            Announcement::originate(pfx(192, 0, 2, 0, 24), Asn(3)),
            Announcement::originate(pfx(198, 51, 100, 0, 24), Asn(666)),
        ];
        (t, origins)
    }

    #[test]
    fn reachability_same_as_and_through_transit() {
        let (t, origins) = small_topology(false);
        let ribs = compute_ribs(&t, &origins, &BTreeMap::new());
        let a1 = Addr::new(10, 0, 0, 1);
        let a3 = Addr::new(192, 0, 2, 1);
        assert!(reachability(&t, &ribs, a1, Addr::new(10, 0, 0, 2)));
        assert!(reachability(&t, &ribs, a1, a3));
    }

    #[test]
    fn filtered_route_disconnects_victim() {
        let (t, origins) = small_topology(true);
        // transit's RP says 10.0.0.0/24 belongs to AS 9999: AS1's own
        // announcement classifies invalid at AS2, so AS3 never learns it
        let mut vrps = BTreeMap::new();
        vrps.insert(
            "rp".to_string(),
            vrp_set(&[(pfx(10, 0, 0, 0, 24), 24, 9999)]),
        );
        let ribs = compute_ribs(&t, &origins, &vrps);
        let a1 = Addr::new(10, 0, 0, 1);
        let a3 = Addr::new(192, 0, 2, 1);
        assert!(!reachability(&t, &ribs, a1, a3));
    }

    #[test]
    fn hijack_filtered_vs_hijacked() {
        // IXP: victim AS1 and adversary AS666 both members; observer AS3
        // behind the route server
        let mk = |asn: u32, pfxs: Vec<Prefix>| AsConfig {
            asn: Asn(asn),
            prefixes: pfxs,
            addresses: vec![],
            rov_rp: None,
        };
        let mut t = Topology::default();
        t.ases.insert(Asn(1), mk(1, vec![pfx(10, 0, 0, 0, 24)]));
        t.ases.insert(Asn(3), mk(3, vec![pfx(192, 0, 2, 0, 24)]));
        t.ases.insert(Asn(666), mk(666, vec![pfx(198, 51, 100, 0, 24)]));
        t.links = vec![
            (Asn(1), Asn(3), LinkKind::Transit),
            (Asn(666), Asn(3), LinkKind::RouteServer),
        ];
        t.route_server_rp = Some("rp".into());
        let legit = vec![Announcement::originate(pfx(10, 0, 0, 0, 24), Asn(1))];
        let adversary = Announcement::originate(pfx(10, 0, 0, 0, 24), Asn(666));

        // ROA intact: filtered
        let mut vrps = BTreeMap::new();
        vrps.insert("rp".to_string(), vrp_set(&[(pfx(10, 0, 0, 0, 24), 24, 1)]));
        assert_eq!(
            hijack_outcome(&t, &vrps, &legit, &adversary, Asn(3)),
            HijackOutcome::Filtered
        );

        // ROA expired (unknown): route-server path wins on LOCAL_PREF
        let empty = BTreeMap::from([("rp".to_string(), VrpSet::default())]);
        assert_eq!(
            hijack_outcome(&t, &empty, &legit, &adversary, Asn(3)),
            HijackOutcome::Hijacked
        );
    }

    #[test]
    fn hijack_not_preferred_on_longer_path() {
        // adversary two hops away with equal local_pref: legit route wins
        let mk = |asn: u32, pfxs: Vec<Prefix>| AsConfig {
            asn: Asn(asn),
            prefixes: pfxs,
            addresses: vec![],
            rov_rp: None,
        };
        let mut t = Topology::default();
        t.ases.insert(Asn(1), mk(1, vec![pfx(10, 0, 0, 0, 24)]));
        t.ases.insert(Asn(3), mk(3, vec![pfx(192, 0, 2, 0, 24)]));
        t.ases.insert(Asn(4), mk(4, vec![pfx(203, 0, 113, 0, 24)]));
        t.ases.insert(Asn(666), mk(666, vec![pfx(198, 51, 100, 0, 24)]));
        t.links = vec![
            (Asn(1), Asn(3), LinkKind::Transit),
            (Asn(4), Asn(3), LinkKind::Transit),
            (Asn(666), Asn(4), LinkKind::Transit),
        ];
        let legit = vec![Announcement::originate(pfx(10, 0, 0, 0, 24), Asn(1))];
        let adversary = Announcement::originate(pfx(10, 0, 0, 0, 24), Asn(666));
        let vrps = BTreeMap::new();
        assert_eq!(
            hijack_outcome(&t, &vrps, &legit, &adversary, Asn(3)),
            HijackOutcome::NotPreferred
        );
    }
}
