//! Relying-party state machine: periodic sequential refresh over all
//! publication points, DNS resolution, connection with OS-level SYN
//! retries, per-PP timeouts, depth limits, caching with manifest-expiry
//! semantics, and VRP emission.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bgp::{Vrp, VrpSet};
use crate::dns::{DnsResult, Nameserver, Resolver};
use crate::net::Addr;
use crate::pp::{linux_syn_offsets, PublicationPoint};
use crate::ratelimit::FloodSegment;
use crate::rpki::{RepositoryTree, Transport};
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RpKind {
    Routinator,
    Fort,
    Octorpki,
    RipeValidator,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MitigationFlags {
    /// uniform ± jitter added to t_sleep
    pub randomize_sleep: Option<SimDuration>,
    /// overrides the profile's max_depth when lower
    pub enforce_depth_cap: Option<u32>,
    /// missing/expired ROAs become a deny-set instead of unknown
    pub strict_invalid_on_missing: bool,
}

/// Depth guard for profiles with no depth limit: traversal is aborted and
/// logged as "unbounded traversal" after this many levels.
pub const UNBOUNDED_TRAVERSAL_GUARD: u32 = 10_000;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelyingPartyProfile {
    pub kind: RpKind,
    pub t_sleep: SimDuration,
    /// time to first byte before the fetch is abandoned
    pub per_pp_timeout_idle: SimDuration,
    /// total per-PP time before a slow (throttled) fetch is abandoned;
    /// None = unbounded, the transfer runs to completion
    pub per_pp_timeout_throttled: Option<SimDuration>,
    /// throttled limit over rsync transport, where different
    pub per_pp_timeout_rsync: Option<SimDuration>,
    /// None = unbounded (guarded at UNBOUNDED_TRAVERSAL_GUARD)
    pub max_depth: Option<u32>,
    pub local_scan_time: SimDuration,
    pub tcp_syn_retries: u32,
    /// validation/processing time after traversal: normal draw, clipped
    pub processing_mean: SimDuration,
    pub processing_sigma: SimDuration,
    pub processing_clip: (SimDuration, SimDuration),
    pub mitigation: MitigationFlags,
}

impl RelyingPartyProfile {
    fn base(kind: RpKind, t_sleep_s: u64, idle_s: u64, throttled: Option<u64>, depth: Option<u32>) -> Self {
        RelyingPartyProfile {
            kind,
            t_sleep: SimDuration::from_secs(t_sleep_s),
            per_pp_timeout_idle: SimDuration::from_secs(idle_s),
            per_pp_timeout_throttled: throttled.map(SimDuration::from_secs),
            per_pp_timeout_rsync: None,
            max_depth: depth,
            local_scan_time: SimDuration::from_secs(5),
            tcp_syn_retries: 6,
            processing_mean: SimDuration::from_secs(20),
            processing_sigma: SimDuration::from_secs(2),
            processing_clip: (SimDuration::from_secs(10), SimDuration::from_secs(40)),
            mitigation: MitigationFlags::default(),
        }
    }

    pub fn routinator() -> Self {
        Self::base(RpKind::Routinator, 600, 300, Some(300), Some(32))
    }

    /// Fort's throttled fetches have no fixed timeout: duration is
    /// inflate_to / bandwidth, set by the attacker.
    pub fn fort() -> Self {
        Self::base(RpKind::Fort, 3600, 24, None, Some(31))
    }

    pub fn octorpki() -> Self {
        let mut p = Self::base(RpKind::Octorpki, 1200, 60, Some(60), Some(30));
        p.per_pp_timeout_rsync = Some(SimDuration::from_secs(1200));
        p
    }

    pub fn ripe_validator() -> Self {
        Self::base(RpKind::RipeValidator, 120, 60, Some(0), None)
    }

    pub fn effective_max_depth(&self) -> (u32, bool) {
        let profile_depth = self.max_depth.unwrap_or(UNBOUNDED_TRAVERSAL_GUARD);
        let capped = match self.mitigation.enforce_depth_cap {
            Some(cap) => profile_depth.min(cap),
            None => profile_depth,
        };
        (capped, self.max_depth.is_none())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tal {
    pub root_cert: String,
    pub root_domain: String,
}

#[derive(Clone, Debug)]
pub struct CachedRoa {
    pub prefix: crate::net::Prefix,
    pub asn: crate::net::Asn,
    pub max_len: u8,
    pub roa_valid_until: SimTime,
    pub manifest_valid_until: SimTime,
    pub fetched_at: SimTime,
}

#[derive(Clone, Debug, Default)]
pub struct RpCache {
    pub roas: BTreeMap<String, CachedRoa>,
    pub last_successful_fetch: BTreeMap<String, SimTime>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PpOutcomeKind {
    Success,
    DnsTimeout,
    ConnectTimeout,
    FetchTimeout,
}

#[derive(Clone, Debug, Serialize)]
pub struct PpOutcome {
    pub domain: String,
    pub outcome: PpOutcomeKind,
    pub duration: SimDuration,
}

#[derive(Clone, Debug, Serialize)]
pub struct RefreshReport {
    pub rp: String,
    pub refresh_index: u64,
    pub started: SimTime,
    pub ended: SimTime,
    pub per_pp: Vec<PpOutcome>,
    pub vrp_version: u64,
    pub vrp_changed: bool,
    /// DNS exchanges that actually hit the wire this refresh: (domain,
    /// first query time) — what an adversary hosting a zone can observe
    pub dns_exchanges: Vec<(String, SimTime)>,
    pub unbounded_traversal_guard_tripped: bool,
    /// time spent inside publication points marked adversarial
    pub stall_time: SimDuration,
}

/// Everything outside the RP that a refresh touches. Flood maps are keyed
/// by nameserver / publication-point node label.
pub struct RefreshEnv<'a> {
    pub nameservers: &'a mut BTreeMap<String, Nameserver>,
    pub pps: &'a mut BTreeMap<String, PublicationPoint>,
    pub trees: &'a BTreeMap<String, RepositoryTree>,
    /// pp domain → pp node label
    pub domain_map: &'a BTreeMap<String, String>,
    pub dns_floods: &'a BTreeMap<String, Vec<FloodSegment>>,
    pub syn_floods: &'a BTreeMap<String, Vec<FloodSegment>>,
    /// pp node labels counted as adversarial for stall accounting
    pub adversary_pps: &'a BTreeSet<String>,
    pub rng: &'a mut ChaCha8Rng,
}

impl<'a> RefreshEnv<'a> {
    fn ns_label_for(&self, name: &str) -> Option<String> {
        self.nameservers
            .iter()
            .find(|(_, ns)| ns.has_record(name))
            .map(|(label, _)| label.clone())
    }
}

pub struct RelyingParty {
    pub name: String,
    pub profile: RelyingPartyProfile,
    pub addr: Addr,
    pub resolver: Resolver,
    pub tals: Vec<Tal>,
    pub cache: RpCache,
    vrps: VrpSet,
    emitted_version: u64,
    pub refresh_index: u64,
    /// domains seen during the previous traversal: bulk-resolved at the
    /// start of the next refresh
    known_domains: BTreeSet<String>,
    fetch_size_bytes: u64,
}

impl RelyingParty {
    pub fn new(
        name: &str,
        profile: RelyingPartyProfile,
        addr: Addr,
        resolver: Resolver,
        tals: Vec<Tal>,
    ) -> Self {
        let known: BTreeSet<String> = tals.iter().map(|t| t.root_domain.clone()).collect();
        RelyingParty {
            name: name.to_string(),
            profile,
            addr,
            resolver,
            tals,
            cache: RpCache::default(),
            vrps: VrpSet::default(),
            emitted_version: 0,
            refresh_index: 0,
            known_domains: known,
            fetch_size_bytes: 50_000,
        }
    }

    pub fn current_vrps(&self) -> &VrpSet {
        &self.vrps
    }

    /// VRP snapshot to push to routers, when the version changed since the
    /// last emission.
    pub fn take_vrp_delta(&mut self) -> Option<VrpSet> {
        if self.vrps.version != self.emitted_version {
            self.emitted_version = self.vrps.version;
            Some(self.vrps.clone())
        } else {
            None
        }
    }

    /// One full refresh starting at `start`, in virtual time. Returns the
    /// report; the caller schedules the next refresh at
    /// `ended + t_sleep (+ jitter)`.
    pub fn run_refresh(&mut self, env: &mut RefreshEnv, start: SimTime) -> RefreshReport {
        self.refresh_index += 1;
        let mut report = RefreshReport {
            rp: self.name.clone(),
            refresh_index: self.refresh_index,
            started: start,
            ended: start,
            per_pp: Vec::new(),
            vrp_version: self.vrps.version,
            vrp_changed: false,
            dns_exchanges: Vec::new(),
            unbounded_traversal_guard_tripped: false,
            stall_time: SimDuration::ZERO,
        };

        // Bulk DNS: queries to all known repositories go out concurrently
        // at refresh start.
        let mut dns_results: BTreeMap<String, (DnsResult, SimTime)> = BTreeMap::new();
        let bulk: Vec<String> = self.known_domains.iter().cloned().collect();
        for domain in &bulk {
            let (result, at) = self.resolve_domain(env, domain, start, &mut report);
            dns_results.insert(domain.clone(), (result, at));
        }

        // local cache scan
        let mut cursor = start + self.profile.local_scan_time;

        let (max_depth, unbounded) = self.profile.effective_max_depth();
        let mut seen_domains: BTreeSet<String> = BTreeSet::new();
        let mut next_known: BTreeSet<String> =
            self.tals.iter().map(|t| t.root_domain.clone()).collect();

        let tals = self.tals.clone();
        for tal in &tals {
            let mut queue: VecDeque<(String, String, u32)> = VecDeque::new();
            queue.push_back((tal.root_cert.clone(), tal.root_domain.clone(), 1));
            while let Some((cert_id, domain, depth)) = queue.pop_front() {
                if depth > max_depth {
                    if unbounded {
                        report.unbounded_traversal_guard_tripped = true;
                    }
                    continue;
                }
                next_known.insert(domain.clone());
                if !seen_domains.insert(domain.clone()) {
                    // domain already fetched this refresh: reuse, no cost
                    self.absorb_objects(env, &cert_id, &domain, cursor, depth, &mut queue);
                    continue;
                }
                let pp_start = cursor;
                // DNS: bulk result if present, on-demand otherwise
                let (dns_result, dns_at) = match dns_results.get(&domain) {
                    Some(r) => r.clone(),
                    None => {
                        let r = self.resolve_domain(env, &domain, cursor, &mut report);
                        dns_results.insert(domain.clone(), r.clone());
                        r
                    }
                };
                let resolved = match dns_result {
                    DnsResult::Answer(addr) => Some(addr),
                    _ => None,
                };
                cursor = cursor.max(dns_at);
                let Some(_pp_addr) = resolved else {
                    report.per_pp.push(PpOutcome {
                        domain: domain.clone(),
                        outcome: PpOutcomeKind::DnsTimeout,
                        duration: cursor.since(pp_start),
                    });
                    continue;
                };
                let Some(pp_label) = env.domain_map.get(&domain).cloned() else {
                    report.per_pp.push(PpOutcome {
                        domain: domain.clone(),
                        outcome: PpOutcomeKind::DnsTimeout,
                        duration: cursor.since(pp_start),
                    });
                    continue;
                };
                let is_adversary = env.adversary_pps.contains(&pp_label);

                // TCP connect with OS-level SYN retries
                let connect_at = self.connect(env, &pp_label, cursor);
                let Some(connected) = connect_at else {
                    let give_up = SimDuration::from_secs(63).min(self.profile.per_pp_timeout_idle);
                    cursor = cursor + give_up;
                    report.per_pp.push(PpOutcome {
                        domain: domain.clone(),
                        outcome: PpOutcomeKind::ConnectTimeout,
                        duration: cursor.since(pp_start),
                    });
                    if is_adversary {
                        report.stall_time = report.stall_time + cursor.since(pp_start);
                    }
                    continue;
                };
                cursor = connected;

                // fetch with idle / throttled timeouts
                let (timing, transport) = {
                    let pp = env.pps.get(&pp_label).expect("pp exists");
                    (
                        pp.serve_fetch(self.addr, self.fetch_size_bytes, cursor),
                        pp.config.transport,
                    )
                };
                let idle_to = self.profile.per_pp_timeout_idle;
                let total_to = match transport {
                    Transport::Rsync => self
                        .profile
                        .per_pp_timeout_rsync
                        .or(self.profile.per_pp_timeout_throttled),
                    Transport::Rrdp => self.profile.per_pp_timeout_throttled,
                };
                let first_byte_delay = timing.first_byte_at.since(cursor);
                let body = timing.done_at.since(timing.first_byte_at);
                // The throttled ("total") timeout watches transfer progress
                // after the first byte; a 1s grace keeps ordinary sub-second
                // bodies from tripping a zero-second configured timeout.
                let failed_at = if first_byte_delay > idle_to {
                    Some(cursor + idle_to)
                } else if let Some(tt) = total_to {
                    (body > tt + SimDuration::from_secs(1))
                        .then(|| timing.first_byte_at + tt)
                } else {
                    None
                };
                if let Some(fail) = failed_at {
                    cursor = fail;
                    report.per_pp.push(PpOutcome {
                        domain: domain.clone(),
                        outcome: PpOutcomeKind::FetchTimeout,
                        duration: cursor.since(pp_start),
                    });
                    if is_adversary {
                        report.stall_time = report.stall_time + cursor.since(pp_start);
                    }
                    continue;
                }
                cursor = timing.done_at;
                self.cache
                    .last_successful_fetch
                    .insert(domain.clone(), cursor);
                self.absorb_objects(env, &cert_id, &domain, cursor, depth, &mut queue);
                report.per_pp.push(PpOutcome {
                    domain: domain.clone(),
                    outcome: PpOutcomeKind::Success,
                    duration: cursor.since(pp_start),
                });
                if is_adversary {
                    report.stall_time = report.stall_time + cursor.since(pp_start);
                }
            }
        }
        self.known_domains = next_known;

        // validation / processing time
        let mean = self.profile.processing_mean.as_secs_f64();
        let sigma = self.profile.processing_sigma.as_secs_f64();
        let draw = if sigma > 0.0 {
            Normal::new(mean, sigma).expect("valid normal").sample(env.rng)
        } else {
            mean
        };
        let (lo, hi) = self.profile.processing_clip;
        let processing =
            SimDuration::from_secs_f64(draw.clamp(lo.as_secs_f64(), hi.as_secs_f64()));
        cursor = cursor + processing;

        report.ended = cursor;
        report.vrp_changed = self.recompute_states(cursor);
        report.vrp_version = self.vrps.version;
        report
    }

    /// Re-derives the VrpSet from the cache: ROAs whose covering manifest
    /// (as cached) has expired are suspicious and dropped; under the strict
    /// mitigation their prefixes go to the deny-set instead of unknown.
    pub fn recompute_states(&mut self, now: SimTime) -> bool {
        let mut entries = BTreeSet::new();
        let mut denied = BTreeSet::new();
        for roa in self.cache.roas.values() {
            if roa.manifest_valid_until >= now && roa.roa_valid_until >= now {
                entries.insert(Vrp {
                    prefix: roa.prefix,
                    max_len: roa.max_len,
                    asn: roa.asn,
                });
            } else if self.profile.mitigation.strict_invalid_on_missing {
                denied.insert(roa.prefix);
            }
        }
        if entries != self.vrps.entries || denied != self.vrps.denied {
            self.vrps.entries = entries;
            self.vrps.denied = denied;
            self.vrps.version += 1;
            true
        } else {
            false
        }
    }

    /// Next refresh start after a refresh that ended at `ended`.
    pub fn next_refresh_at(&self, ended: SimTime, rng: &mut ChaCha8Rng) -> SimTime {
        use rand::Rng;
        let base = ended + self.profile.t_sleep;
        match self.profile.mitigation.randomize_sleep {
            Some(j) if j.as_millis() > 0 => {
                let jitter = rng.gen_range(-(j.as_millis() as i64)..=(j.as_millis() as i64));
                if jitter >= 0 {
                    base + SimDuration::from_millis(jitter as u64)
                } else {
                    base - SimDuration::from_millis((-jitter) as u64)
                }
            }
            _ => base,
        }
    }

    fn resolve_domain(
        &mut self,
        env: &mut RefreshEnv,
        domain: &str,
        at: SimTime,
        report: &mut RefreshReport,
    ) -> (DnsResult, SimTime) {
        let Some(label) = env.ns_label_for(domain) else {
            return (DnsResult::Servfail, at);
        };
        let ns = env.nameservers.get_mut(&label).expect("ns exists");
        let empty = Vec::new();
        let floods = env.dns_floods.get(&label).unwrap_or(&empty);
        let before_cache = self.resolver.cached(domain, at).is_some();
        let out = self.resolver.resolve(domain, ns, at, floods, env.rng);
        if out.queries_sent > 0 && !before_cache {
            report.dns_exchanges.push((domain.to_string(), at));
        }
        (out.result, out.resolved_at)
    }

    fn connect(&mut self, env: &mut RefreshEnv, pp_label: &str, start: SimTime) -> Option<SimTime> {
        let pp = env.pps.get_mut(pp_label).expect("pp exists");
        let empty = Vec::new();
        let floods = env.syn_floods.get(pp_label).unwrap_or(&empty);
        for off in linux_syn_offsets(self.profile.tcp_syn_retries) {
            if off >= self.profile.per_pp_timeout_idle {
                break;
            }
            let at = start + off;
            let flood_rate: f64 = floods
                .iter()
                .filter(|(s, e, _)| *s <= at && at < *e)
                .map(|(_, _, r)| *r)
                .sum();
            if pp.handle_syn(self.addr, at, floods, flood_rate, env.rng) {
                return Some(at);
            }
        }
        None
    }

    /// Pulls the objects for `cert_id` at `domain` out of the tree view the
    /// PP serves this client, caching ROAs + manifest validity and queueing
    /// child publication points.
    fn absorb_objects(
        &mut self,
        env: &RefreshEnv,
        cert_id: &str,
        domain: &str,
        now: SimTime,
        depth: u32,
        queue: &mut VecDeque<(String, String, u32)>,
    ) {
        let Some(pp_label) = env.domain_map.get(domain) else {
            return;
        };
        let Some(pp) = env.pps.get(pp_label) else {
            return;
        };
        let view = pp.view_for(self.addr);
        let Some(tree) = env.trees.get(&view.content) else {
            return;
        };
        let Some(cert) = tree.certs.get(cert_id) else {
            return;
        };
        let mft_valid_until = tree
            .manifest_for_cert(cert_id)
            .map(|m| m.valid_until)
            .unwrap_or(SimTime::ZERO);
        for roa in tree.roas_under_cert(cert_id) {
            self.cache.roas.insert(
                roa.id.clone(),
                CachedRoa {
                    prefix: roa.prefix,
                    asn: roa.asn,
                    max_len: roa.max_len,
                    roa_valid_until: roa.valid_until,
                    manifest_valid_until: mft_valid_until,
                    fetched_at: now,
                },
            );
        }
        // Children go on the queue unconditionally; the pop-side depth check
        // is the single place traversal is truncated.
        for child_id in &cert.children {
            if let Some(child) = tree.certs.get(child_id) {
                queue.push_back((child.id.clone(), child.pp_uri.domain.clone(), depth + 1));
            }
        }
    }
}
