//! Wires the pieces into a running simulation: relying parties refreshing
//! against publication points and nameservers, manifest maintenance at the
//! repositories, the attacker's observe–predict–burst loop, and BGP/ROV
//! evaluation of the resulting validation states.
//!
//! Refreshes execute atomically in start order (an RP's refresh computes
//! its entire timeline in virtual time before the next actor runs); the
//! only cross-actor coupling within a refresh — floods draining rate-limit
//! buckets — is carried analytically by the flood segment lists, so the
//! interleaving is exact despite the atomic execution.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::attacker::{
    burst_packets, AttackPlan, AttackReport, BurstRow, BurstTarget, IntervalPredictor,
    StopCondition,
};
use crate::bgp::{compute_ribs, hijack_outcome, reachability, Announcement, HijackOutcome, Topology, VrpSet};
use crate::dns::Nameserver;
use crate::net::{Addr, Asn, Prefix};
use crate::pp::PublicationPoint;
use crate::ratelimit::FloodSegment;
use crate::rp::{PpOutcomeKind, RefreshEnv, RefreshReport, RelyingParty};
use crate::rpki::{content_hash, maintain_manifest, RepositoryTree};
use crate::sim::EventLog;
use crate::time::{SimDuration, SimTime};

/// How a repository's manifests evolve while the simulation runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum ManifestRegime {
    /// objects never change
    Static,
    /// re-signed on the fly: every maintenance pass stamps a fresh validity
    /// window, so any successful fetch observes a full `validity` remaining
    AlwaysFresh { validity: SimDuration },
    /// Krill-style: renewed only once the remaining validity drops below
    /// the manifest's own regeneration threshold
    Timed,
}

/// The attacker's position and live state inside a world.
#[derive(Clone, Debug)]
pub struct Attack {
    pub plan: AttackPlan,
    pub predictor: IntervalPredictor,
    /// name of the RP under attack
    pub victim_rp: String,
    pub victim_prefix: Prefix,
    /// publication-point domain hosting the victim ROA
    pub victim_domain: String,
    /// node label (nameserver or PP) whose buckets the bursts drain
    pub target_label: String,
    /// domains whose wire queries the adversary observes for prediction
    pub observe_domains: BTreeSet<String>,
    /// bursts are withheld until this instant (the attacker watches the
    /// victim repository and only strikes once denial can matter)
    pub arm_not_before: Option<SimTime>,
    /// shift applied to the predicted window before bursting: the victim's
    /// resolver walks its retry schedule after the predicted bulk query,
    /// so aiming at the middle of that schedule halves the prediction
    /// accuracy the attack needs
    pub aim_offset: SimDuration,
    // --- runtime state ---
    had_success: bool,
    started_at: Option<SimTime>,
    iterations: u64,
    packets: u64,
    rows: Vec<BurstRow>,
    /// burst window whose denied-attempt count is still to be filled in
    pending_row: Option<((SimTime, SimTime), usize)>,
    downgrade_at: Option<SimTime>,
}

impl Attack {
    pub fn new(
        plan: AttackPlan,
        window_halfwidth: SimDuration,
        victim_rp: &str,
        victim_prefix: Prefix,
        victim_domain: &str,
        target_label: &str,
        observe_domains: impl IntoIterator<Item = String>,
    ) -> Self {
        Attack {
            plan,
            predictor: IntervalPredictor::new(window_halfwidth),
            victim_rp: victim_rp.to_string(),
            victim_prefix,
            victim_domain: victim_domain.to_string(),
            target_label: target_label.to_string(),
            observe_domains: observe_domains.into_iter().collect(),
            arm_not_before: None,
            aim_offset: SimDuration::from_secs(4),
            had_success: false,
            started_at: None,
            iterations: 0,
            packets: 0,
            rows: Vec::new(),
            pending_row: None,
            downgrade_at: None,
        }
    }

    pub fn report(&self, hijack: Option<HijackOutcome>) -> AttackReport {
        AttackReport {
            iterations: self.iterations,
            packets_injected: self.packets,
            time_to_downgrade: match (self.downgrade_at, self.started_at) {
                (Some(d), Some(s)) => Some(d.since(s)),
                _ => None,
            },
            hijack_outcome: hijack,
            bursts: self.rows.clone(),
        }
    }
}

/// The bogus announcement injected after a downgrade and the AS at which
/// its fate is judged.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HijackSpec {
    pub prefix: Prefix,
    pub origin: Asn,
    pub observer: Asn,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub downgrade_achieved: bool,
    pub time_to_unknown: Option<SimTime>,
    pub hijack_outcome: Option<HijackOutcome>,
    /// observer → victim-prefix reachability over legitimate routes,
    /// sampled at downgrade time (or at the end of a clean run)
    pub victim_reachable: Option<bool>,
    pub packets_injected: u64,
    pub refreshes_observed: u64,
}

/// Delay between an RP's VRP emission and routers acting on it.
pub const VRP_PROPAGATION_DELAY: SimDuration = SimDuration(2_000);

pub struct World {
    pub now: SimTime,
    pub nameservers: BTreeMap<String, Nameserver>,
    pub pps: BTreeMap<String, PublicationPoint>,
    pub trees: BTreeMap<String, RepositoryTree>,
    /// pp domain → pp node label
    pub domain_map: BTreeMap<String, String>,
    /// tree key → manifest regime (trees absent here are static)
    pub regimes: BTreeMap<String, ManifestRegime>,
    pub dns_floods: BTreeMap<String, Vec<FloodSegment>>,
    pub syn_floods: BTreeMap<String, Vec<FloodSegment>>,
    pub adversary_pps: BTreeSet<String>,
    pub rps: Vec<RelyingParty>,
    next_refresh: Vec<SimTime>,
    pub topology: Option<Topology>,
    pub legit_origins: Vec<Announcement>,
    pub hijack: Option<HijackSpec>,
    pub attack: Option<Attack>,
    pub rng: ChaCha8Rng,
    pub log: EventLog,
}

impl World {
    pub fn new(seed: u64) -> Self {
        World {
            now: SimTime::ZERO,
            nameservers: BTreeMap::new(),
            pps: BTreeMap::new(),
            trees: BTreeMap::new(),
            domain_map: BTreeMap::new(),
            regimes: BTreeMap::new(),
            dns_floods: BTreeMap::new(),
            syn_floods: BTreeMap::new(),
            adversary_pps: BTreeSet::new(),
            rps: Vec::new(),
            next_refresh: Vec::new(),
            topology: None,
            legit_origins: Vec::new(),
            hijack: None,
            attack: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            log: EventLog::new(),
        }
    }

    /// Registers an RP with its first refresh at `first_refresh`.
    pub fn add_rp(&mut self, rp: RelyingParty, first_refresh: SimTime) {
        self.rps.push(rp);
        self.next_refresh.push(first_refresh);
    }

    pub fn rp_by_name(&self, name: &str) -> Option<&RelyingParty> {
        self.rps.iter().find(|r| r.name == name)
    }

    fn apply_maintenance(&mut self, now: SimTime) {
        for (key, regime) in &self.regimes {
            let Some(tree) = self.trees.get_mut(key) else {
                continue;
            };
            match regime {
                ManifestRegime::Static => {}
                ManifestRegime::AlwaysFresh { validity } => {
                    for m in tree.manifests.values_mut() {
                        m.valid_from = now;
                        m.valid_until = now + *validity;
                        for (id, _) in m.listed_objects.clone() {
                            let h = content_hash(&id, m.valid_until);
                            m.listed_objects.insert(id, h);
                        }
                    }
                }
                ManifestRegime::Timed => {
                    for m in tree.manifests.values_mut() {
                        *m = maintain_manifest(m, now);
                    }
                }
            }
        }
    }

    fn run_one_refresh(&mut self, idx: usize, start: SimTime) -> RefreshReport {
        let World {
            nameservers,
            pps,
            trees,
            domain_map,
            dns_floods,
            syn_floods,
            adversary_pps,
            rng,
            rps,
            ..
        } = self;
        let mut env = RefreshEnv {
            nameservers,
            pps,
            trees,
            domain_map,
            dns_floods,
            syn_floods,
            adversary_pps,
            rng,
        };
        rps[idx].run_refresh(&mut env, start)
    }

    /// rp name → current VrpSet, the map BGP evaluation consumes.
    pub fn vrps_map(&self) -> BTreeMap<String, VrpSet> {
        self.rps
            .iter()
            .map(|r| (r.name.clone(), r.current_vrps().clone()))
            .collect()
    }

    /// Evaluates the configured hijack at the current validation state.
    pub fn evaluate_hijack(&self) -> Option<HijackOutcome> {
        let (topology, spec) = (self.topology.as_ref()?, self.hijack.as_ref()?);
        let adversary = Announcement::originate(spec.prefix, spec.origin);
        Some(hijack_outcome(
            topology,
            &self.vrps_map(),
            &self.legit_origins,
            &adversary,
            spec.observer,
        ))
    }

    /// Bidirectional reachability between two addresses under the current
    /// validation state, legitimate announcements only.
    pub fn reachability_now(&self, s: Addr, d: Addr) -> Option<bool> {
        let topology = self.topology.as_ref()?;
        let ribs = compute_ribs(topology, &self.legit_origins, &self.vrps_map());
        Some(reachability(topology, &ribs, s, d))
    }

    /// Observer address → an address inside the victim prefix, from the
    /// hijack spec's observer AS to the AS owning the prefix.
    fn probe_victim_reachability(&self) -> Option<bool> {
        let (topology, spec) = (self.topology.as_ref()?, self.hijack.as_ref()?);
        let observer = topology.ases.get(&spec.observer)?.addresses.first()?;
        let victim = topology
            .ases
            .values()
            .find(|a| a.prefixes.iter().any(|p| p.covers(&spec.prefix) || spec.prefix.covers(p)))
            .and_then(|a| a.addresses.first())?;
        self.reachability_now(*observer, *victim)
    }

    fn process_attack(&mut self, report: &RefreshReport) -> Option<SimTime> {
        // split-borrow: the attack state is taken out and restored so the
        // rest of the world stays accessible
        let mut attack = self.attack.take()?;
        let mut downgrade_event = None;
        if report.rp == attack.victim_rp {
            // settle the previous burst's denied-attempt count
            if let Some((window, row)) = attack.pending_row {
                if report.started >= window.0 {
                    let denied = report
                        .per_pp
                        .iter()
                        .find(|o| o.domain == attack.victim_domain)
                        .map(|o| o.outcome != PpOutcomeKind::Success)
                        .unwrap_or(false);
                    let rp = self.rps.iter().find(|r| r.name == report.rp);
                    let attempts = rp
                        .map(|r| r.resolver.profile.retry_schedule.len() as u64)
                        .unwrap_or(0);
                    attack.rows[row].victim_attempts_denied = if denied { attempts } else { 0 };
                    attack.pending_row = None;
                }
            }
            if report
                .per_pp
                .iter()
                .any(|o| o.domain == attack.victim_domain && o.outcome == PpOutcomeKind::Success)
            {
                attack.had_success = true;
            }
            // downgrade check: the victim prefix left the RP's VRP set
            if attack.downgrade_at.is_none() && attack.started_at.is_some() {
                let rp = self.rps.iter().find(|r| r.name == report.rp).expect("victim rp");
                let covered = rp
                    .current_vrps()
                    .entries
                    .iter()
                    .any(|v| v.prefix == attack.victim_prefix);
                if !covered {
                    let at = report.ended + VRP_PROPAGATION_DELAY;
                    attack.downgrade_at = Some(at);
                    self.log.record(
                        at,
                        &attack.victim_rp,
                        "downgrade",
                        json!({ "prefix": attack.victim_prefix.to_string() }),
                    );
                    downgrade_event = Some(at);
                }
            }
            // feed the predictor with observable wire exchanges, then
            // schedule the next burst
            let mut window = None;
            for (domain, at) in &report.dns_exchanges {
                if attack.observe_domains.contains(domain) {
                    window = attack.predictor.observe_and_predict(*at);
                }
            }
            let give_up = match attack.plan.stop {
                StopCondition::MaxDuration(d) => report.ended > SimTime::ZERO + d,
                StopCondition::ManifestExpired => false,
            };
            if let Some(w) = window {
                let w = (w.0 + attack.aim_offset, w.1 + attack.aim_offset);
                let armed = attack.had_success
                    && attack.downgrade_at.is_none()
                    && !give_up
                    && attack.arm_not_before.map_or(true, |t| w.1 >= t);
                if armed {
                    let floods = match attack.plan.target {
                        BurstTarget::PpSyn => self.syn_floods.entry(attack.target_label.clone()),
                        BurstTarget::NsDns | BurstTarget::PublicResolver => {
                            self.dns_floods.entry(attack.target_label.clone())
                        }
                    }
                    .or_default();
                    floods.push((w.0, w.1, attack.plan.r_attacker));
                    attack.plan.bursts.push(w);
                    let packets = burst_packets(attack.plan.r_attacker, w);
                    attack.packets += packets;
                    attack.iterations += 1;
                    attack.started_at.get_or_insert(w.0);
                    attack.rows.push(BurstRow {
                        window_start: w.0,
                        packets,
                        victim_attempts_denied: 0,
                    });
                    attack.pending_row = Some((w, attack.rows.len() - 1));
                    self.log.record(
                        report.ended,
                        "attacker",
                        "burst",
                        json!({
                            "window_start": w.0.as_millis(),
                            "window_end": w.1.as_millis(),
                            "packets": packets,
                            "target": attack.target_label,
                        }),
                    );
                }
            }
        }
        self.attack = Some(attack);
        downgrade_event
    }

    /// Runs the world for `duration` of simulated time and summarizes.
    pub fn run(&mut self, duration: SimDuration) -> RunSummary {
        let horizon = self.now + duration;
        let mut refreshes = 0u64;
        // (time, hijack outcome, victim reachability), frozen at downgrade
        let mut downgrade: Option<(SimTime, Option<HijackOutcome>, Option<bool>)> = None;
        loop {
            let Some((idx, start)) = self
                .next_refresh
                .iter()
                .copied()
                .enumerate()
                .min_by_key(|(i, t)| (*t, *i))
            else {
                break;
            };
            if start > horizon {
                break;
            }
            self.now = start;
            self.apply_maintenance(start);
            let report = self.run_one_refresh(idx, start);
            refreshes += 1;
            self.now = report.ended;
            let failures = report
                .per_pp
                .iter()
                .filter(|o| o.outcome != PpOutcomeKind::Success)
                .count();
            self.log.record(
                report.started,
                &report.rp.clone(),
                "refresh",
                json!({
                    "index": report.refresh_index,
                    "ended": report.ended.as_millis(),
                    "pps": report.per_pp.len(),
                    "failures": failures,
                    "vrp_version": report.vrp_version,
                    "stall_ms": report.stall_time.as_millis(),
                }),
            );
            self.next_refresh[idx] = self.rps[idx].next_refresh_at(report.ended, &mut self.rng);
            if let Some(at) = self.process_attack(&report) {
                if downgrade.is_none() {
                    // hijack and reachability are judged the moment the
                    // downgrade propagates, before any later refresh can
                    // restore the VRPs
                    let outcome = self.evaluate_hijack();
                    let reachable = self.probe_victim_reachability();
                    downgrade = Some((at, outcome, reachable));
                    if let Some(outcome) = outcome {
                        self.log.record(
                            at,
                            "route-server",
                            "hijack",
                            json!({ "outcome": outcome }),
                        );
                    }
                }
            }
        }
        self.now = horizon;
        let (hijack_outcome, victim_reachable) = match downgrade {
            Some((_, h, r)) => (h, r),
            // no downgrade: judge the hijack against the healthy state
            None => (self.evaluate_hijack(), self.probe_victim_reachability()),
        };
        RunSummary {
            downgrade_achieved: downgrade.is_some(),
            time_to_unknown: downgrade.map(|(t, _, _)| t),
            hijack_outcome,
            victim_reachable,
            packets_injected: self.attack.as_ref().map_or(0, |a| a.packets),
            refreshes_observed: refreshes,
        }
    }

    pub fn attack_report(&self, hijack: Option<HijackOutcome>) -> Option<AttackReport> {
        self.attack.as_ref().map(|a| a.report(hijack))
    }
}
