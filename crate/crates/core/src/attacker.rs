//! Attack orchestration building blocks: refresh-interval prediction from
//! arrivals observed at adversary-controlled infrastructure, synchronized
//! low-rate spoofed bursts, delegation stall-chain deployment, and the
//! victim-RP identification procedure.
//!
//! The full downgrade loop that wires these into a running simulation lives
//! in [`crate::world`]; everything here is either pure state or operates on
//! narrow slices of the world (flood vectors, closures) so it can be tested
//! in isolation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bgp::HijackOutcome;
use crate::dns::ZoneRecord;
use crate::net::{Addr, Asn};
use crate::pp::{ClientView, PpBehavior, PpConfig, ServeBehavior};
use crate::ratelimit::FloodSegment;
use crate::rpki::{build_delegation_chain, RepositoryTree, Resource};
use crate::time::{SimDuration, SimTime};

/// Gaps kept for the period estimate; older observations age out.
const PREDICTOR_GAPS: usize = 10;

/// Estimates the victim RP's refresh period from query arrival times at an
/// adversary-controlled publication point or nameserver, and predicts a
/// window around the next expected exchange.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntervalPredictor {
    observations: Vec<SimTime>,
    pub window_halfwidth: SimDuration,
}

impl Default for IntervalPredictor {
    fn default() -> Self {
        Self::new(SimDuration::from_secs(30))
    }
}

impl IntervalPredictor {
    pub fn new(window_halfwidth: SimDuration) -> Self {
        IntervalPredictor {
            observations: Vec::new(),
            window_halfwidth,
        }
    }

    pub fn observations(&self) -> &[SimTime] {
        &self.observations
    }

    /// Trimmed mean over the retained gaps: with three or more gaps the
    /// extremes are dropped, which keeps one stalled or jittered refresh
    /// from skewing the estimate.
    pub fn estimated_period(&self) -> Option<SimDuration> {
        if self.observations.len() < 2 {
            return None;
        }
        let mut gaps: Vec<u64> = self
            .observations
            .windows(2)
            .map(|w| w[1].since(w[0]).as_millis())
            .collect();
        gaps.sort_unstable();
        let trimmed: &[u64] = if gaps.len() >= 3 {
            &gaps[1..gaps.len() - 1]
        } else {
            &gaps[..]
        };
        let mean = trimmed.iter().sum::<u64>() as f64 / trimmed.len() as f64;
        Some(SimDuration::from_millis(mean.round() as u64))
    }

    /// Records an arrival and, once at least two observations exist,
    /// predicts the window around the next expected exchange.
    pub fn observe_and_predict(&mut self, arrival: SimTime) -> Option<(SimTime, SimTime)> {
        self.observations.push(arrival);
        if self.observations.len() > PREDICTOR_GAPS + 1 {
            let excess = self.observations.len() - (PREDICTOR_GAPS + 1);
            self.observations.drain(..excess);
        }
        let period = self.estimated_period()?;
        let center = arrival + period;
        Some((center - self.window_halfwidth, center + self.window_halfwidth))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BurstTarget {
    /// SYN-flood the publication point hosting the victim ROA
    PpSyn,
    /// query-flood the nameserver for the victim PP's domain
    NsDns,
    /// flood the victim's public resolver keyed to its address
    PublicResolver,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopCondition {
    /// run until the victim manifest expires in the RP cache
    ManifestExpired,
    /// give up after this much simulated time
    MaxDuration(SimDuration),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StallChainParams {
    pub depth: usize,
    pub per_level_hold: SimDuration,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackPlan {
    pub target: BurstTarget,
    /// spoofed packets per second inside each burst window
    pub r_attacker: f64,
    /// executed burst windows, ordered and non-overlapping
    pub bursts: Vec<(SimTime, SimTime)>,
    pub stall_chain: Option<StallChainParams>,
    pub stop: StopCondition,
}

impl AttackPlan {
    pub fn new(target: BurstTarget, r_attacker: f64, stop: StopCondition) -> Self {
        AttackPlan {
            target,
            r_attacker,
            bursts: Vec::new(),
            stall_chain: None,
            stop,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.r_attacker <= 0.0 {
            return Err(format!("r_attacker must be positive, got {}", self.r_attacker));
        }
        for w in &self.bursts {
            if w.1 <= w.0 {
                return Err(format!("empty burst window [{}, {}]", w.0, w.1));
            }
        }
        for pair in self.bursts.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(format!(
                    "burst windows overlap: [{}, {}] then [{}, {}]",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                ));
            }
        }
        Ok(())
    }
}

/// One executed burst: the spoofed flood covers exactly the window, so the
/// injected total is rate × window length.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Burst {
    pub window: (SimTime, SimTime),
    pub packets: u64,
}

pub fn burst_packets(r_attacker: f64, window: (SimTime, SimTime)) -> u64 {
    (r_attacker * window.1.since(window.0).as_secs_f64()).round() as u64
}

/// Registers the spoofed flood for `window` on the target's flood list and
/// accounts the packets. A zero rate injects nothing.
pub fn execute_burst(
    plan: &mut AttackPlan,
    window: (SimTime, SimTime),
    target_floods: &mut Vec<FloodSegment>,
) -> Burst {
    let packets = if plan.r_attacker > 0.0 {
        target_floods.push((window.0, window.1, plan.r_attacker));
        plan.bursts.push(window);
        burst_packets(plan.r_attacker, window)
    } else {
        0
    };
    Burst { window, packets }
}

/// Everything a stall-chain deployment adds to the world: the deep tree the
/// victim sees, the flat single-level tree everyone else sees, the
/// publication-point configuration serving them selectively, the zone
/// records for the chain domains, and the trust-anchor pointer the victim
/// RP is assumed to hold.
pub struct StallDeployment {
    pub deep_tree: RepositoryTree,
    pub flat_tree: RepositoryTree,
    pub pp_config: PpConfig,
    pub zone: Vec<ZoneRecord>,
    pub root_cert: String,
    pub root_domain: String,
}

/// Tree keys the deployment's views reference; the caller inserts the trees
/// into the world under these names.
pub const STALL_DEEP_TREE: &str = "stall-deep";
pub const STALL_FLAT_TREE: &str = "stall-flat";

/// Builds the delegation chain and the selective publication point: the
/// victim RP is served the full chain with `per_level_hold` of idle stall
/// per level, all other clients a flat, promptly-served single level.
#[allow(clippy::too_many_arguments)]
pub fn deploy_stall_chain(
    params: StallChainParams,
    base_domain: &str,
    victim_rp: Addr,
    chain_asn: Asn,
    chain_prefix: crate::net::Prefix,
    pp_addr_value: Addr,
    valid_from: SimTime,
    validity: SimDuration,
) -> StallDeployment {
    let resources = Resource::new(chain_asn, [chain_prefix]).expect("chain resources");
    let deep_frag = build_delegation_chain(
        params.depth,
        1,
        base_domain,
        &resources,
        valid_from,
        validity,
    );
    let flat_frag = build_delegation_chain(1, 1, base_domain, &resources, valid_from, validity);
    let root_cert = deep_frag.top_level[0].clone();
    let root_domain = deep_frag.certs[&root_cert].pp_uri.domain.clone();

    let mut zone = Vec::new();
    let mut deep_tree = RepositoryTree {
        tal: root_cert.clone(),
        certs: deep_frag.certs,
        manifests: deep_frag.manifests,
        roas: BTreeMap::new(),
        domain_map: BTreeMap::new(),
    };
    for d in &deep_frag.domains {
        deep_tree.domain_map.insert(d.clone(), "stall-pp".into());
        zone.push(ZoneRecord {
            name: d.clone(),
            ttl_s: 300,
            value: pp_addr_value,
        });
    }
    let mut flat_tree = RepositoryTree {
        tal: flat_frag.top_level[0].clone(),
        certs: flat_frag.certs,
        manifests: flat_frag.manifests,
        roas: BTreeMap::new(),
        domain_map: BTreeMap::new(),
    };
    for d in &flat_frag.domains {
        flat_tree.domain_map.insert(d.clone(), "stall-pp".into());
    }

    let mut pp_config = PpConfig::benign(deep_frag.domains.clone());
    pp_config.behavior = PpBehavior::Selective {
        map: BTreeMap::from([(
            victim_rp,
            ClientView {
                content: STALL_DEEP_TREE.into(),
                behavior: ServeBehavior::StallIdle {
                    hold: params.per_level_hold,
                },
            },
        )]),
        default: ClientView {
            content: STALL_FLAT_TREE.into(),
            behavior: ServeBehavior::Normal,
        },
    };

    StallDeployment {
        deep_tree,
        flat_tree,
        pp_config,
        zone,
        root_cert,
        root_domain,
    }
}

/// Per-burst report row.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BurstRow {
    pub window_start: SimTime,
    pub packets: u64,
    pub victim_attempts_denied: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AttackReport {
    /// burst iterations executed
    pub iterations: u64,
    pub packets_injected: u64,
    /// attack start → victim prefix first unknown; None when the attack
    /// gave up on its stop condition
    pub time_to_downgrade: Option<SimDuration>,
    pub hijack_outcome: Option<HijackOutcome>,
    pub bursts: Vec<BurstRow>,
}

impl AttackReport {
    pub fn succeeded(&self) -> bool {
        self.time_to_downgrade.is_some()
    }

    pub fn bursts_csv(&self) -> String {
        let mut out = String::from("window_start_ms,packets,victim_attempts_denied\n");
        for row in &self.bursts {
            out.push_str(&format!(
                "{},{},{}\n",
                row.window_start.as_millis(),
                row.packets,
                row.victim_attempts_denied
            ));
        }
        out
    }
}

/// Victim-identification bookkeeping. The agreeing ROA pair Σ covers both
/// attacker prefixes with the attacker's ASN; Σ̄ differs only in ρ1's
/// origin, making the attacker's own announcement of P1 invalid for any
/// network that filters by a relying party served Σ̄.
#[derive(Clone, Debug)]
pub struct VictimIdState {
    pub candidate_rps: Vec<Addr>,
    /// attacker ASN (origin of both probe prefixes)
    pub attacker_asn: Asn,
    /// ρ̄1's origin: any ASN other than the attacker's
    pub foreign_asn: Asn,
    /// budget knob: minimum spacing between rounds ("up to two rounds per
    /// hour" in practice)
    pub round_interval: SimDuration,
    pub results: BTreeMap<Addr, IdResult>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdResult {
    Match,
    NoMatch,
    Invalid,
}

impl VictimIdState {
    pub fn new(candidate_rps: Vec<Addr>, attacker_asn: Asn, foreign_asn: Asn) -> Self {
        assert_ne!(attacker_asn, foreign_asn, "Σ̄ must use a foreign origin");
        VictimIdState {
            candidate_rps,
            attacker_asn,
            foreign_asn,
            round_interval: SimDuration::from_secs(1800),
            results: BTreeMap::new(),
        }
    }

    /// Classifies one probe round's reachability observations
    /// (R(a1, aT), R(a2, aT)) taken while the candidate RP alone was served
    /// Σ̄: P1 filtered but P2 reachable means the target filters through
    /// that RP.
    pub fn classify_round(r1: bool, r2: bool) -> IdResult {
        match (r1, r2) {
            (false, true) => IdResult::Match,
            (true, true) => IdResult::NoMatch,
            // P2's ROA is agreeing in both sets; losing it means something
            // other than ROV-by-this-RP interfered
            _ => IdResult::Invalid,
        }
    }
}

/// Iterates the candidates: for each, `probe_round` must serve Σ̄ to that
/// candidate only, allow propagation, and return the pair of reachability
/// observations (R(a1, aT), R(a2, aT)). Returns the first matching RP, or
/// None when no candidate matches (indeterminate when all rounds came back
/// invalid).
pub fn identify_victim_rp(
    state: &mut VictimIdState,
    mut probe_round: impl FnMut(Addr) -> (bool, bool),
) -> Option<Addr> {
    let candidates = state.candidate_rps.clone();
    for rp in candidates {
        let (r1, r2) = probe_round(rp);
        let verdict = VictimIdState::classify_round(r1, r2);
        state.results.insert(rp, verdict);
        if verdict == IdResult::Match {
            return Some(rp);
        }
    }
    None
}
