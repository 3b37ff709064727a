//! Nameserver and resolver models: response-rate-limiting with slip and
//! drop tiers, caching with TTL caps, and implementation-faithful retry
//! profiles.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::net::Addr;
use crate::ratelimit::{FloodSegment, TokenBucket};
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZoneRecord {
    pub name: String,
    pub ttl_s: u64,
    pub value: Addr,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct NameserverConfig {
    pub zone: Vec<ZoneRecord>,
    /// responses/s above which answers are replaced by truncated responses
    pub slip_limit: Option<f64>,
    /// responses/s above which nothing is sent at all
    pub drop_limit: Option<f64>,
}

impl NameserverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if let (Some(s), Some(d)) = (self.slip_limit, self.drop_limit) {
            if s > d {
                return Err(format!("slip_limit {s} exceeds drop_limit {d}"));
            }
        }
        Ok(())
    }
}

/// What the nameserver did with one query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NsReply {
    Answer(Addr),
    NxDomain,
    Truncated,
    Dropped,
}

/// A nameserver with per-client token buckets for the slip and drop tiers.
/// Bucketing key is the exact client /32: the attacker spoofs exactly the
/// victim's address, so coarser prefixes change nothing.
#[derive(Debug)]
pub struct Nameserver {
    pub config: NameserverConfig,
    /// name → (address, ttl) index over the zone
    index: BTreeMap<String, (Addr, u64)>,
    slip_buckets: BTreeMap<Addr, TokenBucket>,
    drop_buckets: BTreeMap<Addr, TokenBucket>,
}

impl Nameserver {
    pub fn new(config: NameserverConfig) -> Self {
        config.validate().expect("valid nameserver config");
        let index = config
            .zone
            .iter()
            .map(|r| (r.name.clone(), (r.value, r.ttl_s)))
            .collect();
        Nameserver {
            config,
            index,
            slip_buckets: BTreeMap::new(),
            drop_buckets: BTreeMap::new(),
        }
    }

    pub fn lookup(&self, name: &str) -> NsReply {
        match self.index.get(name) {
            Some((addr, _)) => NsReply::Answer(*addr),
            None => NsReply::NxDomain,
        }
    }

    pub fn has_record(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn record_ttl(&self, name: &str) -> Option<u64> {
        self.index.get(name).map(|(_, ttl)| *ttl)
    }

    /// Handles one genuine query. `floods` covers spoofed traffic with this
    /// client's source address; `flood_rate` is the active rate at `now`.
    /// The slip and drop tiers are decided with a single uniform draw so
    /// the tier outcomes stay consistent (a query served by the drop tier
    /// but not the slip tier is truncated, never answered).
    pub fn handle_query(
        &mut self,
        client: Addr,
        name: &str,
        now: SimTime,
        floods: &[FloodSegment],
        flood_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> NsReply {
        let answer = self.lookup(name);
        let (slip, drop) = (self.config.slip_limit, self.config.drop_limit);
        if slip.is_none() && drop.is_none() {
            return answer;
        }
        // advance both tiers to now under the flood
        if let Some(d) = drop {
            self.drop_buckets
                .entry(client)
                .or_insert_with(|| TokenBucket::per_second(d))
                .advance(now, floods);
        }
        if let Some(s) = slip {
            self.slip_buckets
                .entry(client)
                .or_insert_with(|| TokenBucket::per_second(s))
                .advance(now, floods);
        }
        let u: f64 = rng.gen();
        let passes = |bucket: Option<&mut TokenBucket>, limit: Option<f64>| -> bool {
            match (bucket, limit) {
                (Some(b), Some(_)) => {
                    if b.tokens() >= 1.0 {
                        b.set_tokens(b.tokens() - 1.0);
                        true
                    } else if flood_rate > 0.0 {
                        let p = b.flooded_service_probability(flood_rate, 0.0);
                        u < p
                    } else {
                        false
                    }
                }
                _ => true, // tier absent: unlimited
            }
        };
        let drop_pass = passes(self.drop_buckets.get_mut(&client), drop);
        if !drop_pass {
            return NsReply::Dropped;
        }
        let slip_pass = passes(self.slip_buckets.get_mut(&client), slip);
        if !slip_pass {
            return NsReply::Truncated;
        }
        answer
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResolverKind {
    Bind9,
    Unbound,
    PublicGoogle,
    PublicCloudflare,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockedStateConfig {
    /// consecutive upstream failures before the nameserver is marked blocked
    pub threshold: u32,
    /// while blocked, at most one probe query per this interval
    pub probe_interval: SimDuration,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClientRateLimits {
    pub slip_limit: Option<f64>,
    pub drop_limit: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolverProfile {
    pub kind: ResolverKind,
    /// offsets from resolution start at which retries go out
    pub retry_schedule: Vec<SimDuration>,
    pub overall_timeout: SimDuration,
    pub blocked_state: Option<BlockedStateConfig>,
    pub cache_max_ttl: SimDuration,
    pub tcp_fallback: bool,
    /// limits a public resolver imposes on its own clients
    pub client_rate_limits: Option<ClientRateLimits>,
}

pub const DEFAULT_CACHE_MAX_TTL: SimDuration = SimDuration(8 * 3_600_000);

impl ResolverProfile {
    /// bind9: 800 ms initial gap, doubling after the fourth query —
    /// 6 queries inside the 10 s client timeout.
    pub fn bind9() -> Self {
        ResolverProfile {
            kind: ResolverKind::Bind9,
            retry_schedule: [0.0, 0.8, 1.6, 2.4, 4.0, 7.2]
                .iter()
                .map(|s| SimDuration::from_secs_f64(*s))
                .collect(),
            overall_timeout: SimDuration::from_secs(10),
            blocked_state: None,
            cache_max_ttl: DEFAULT_CACHE_MAX_TTL,
            tcp_fallback: true,
            client_rate_limits: None,
        }
    }

    /// unbound: up to 16 queries; after its retry budget is exhausted the
    /// nameserver is treated as blocked — 1 probe query every 15 minutes,
    /// immediate SERVFAIL to clients meanwhile.
    pub fn unbound() -> Self {
        let mut sched = Vec::new();
        let mut t = 0.0f64;
        let mut gap = 0.4f64;
        for _ in 0..16 {
            sched.push(SimDuration::from_secs_f64(t));
            t += gap;
            gap = (gap * 1.35).min(1.5);
        }
        ResolverProfile {
            kind: ResolverKind::Unbound,
            retry_schedule: sched,
            overall_timeout: SimDuration::from_secs(20),
            blocked_state: Some(BlockedStateConfig {
                threshold: 16,
                probe_interval: SimDuration::from_secs(900),
            }),
            cache_max_ttl: DEFAULT_CACHE_MAX_TTL,
            tcp_fallback: true,
            client_rate_limits: None,
        }
    }

    pub fn public_google() -> Self {
        ResolverProfile {
            kind: ResolverKind::PublicGoogle,
            client_rate_limits: Some(ClientRateLimits {
                slip_limit: Some(500.0),
                drop_limit: Some(1500.0),
            }),
            ..Self::bind9()
        }
    }

    pub fn public_cloudflare() -> Self {
        ResolverProfile {
            kind: ResolverKind::PublicCloudflare,
            client_rate_limits: Some(ClientRateLimits {
                slip_limit: None,
                drop_limit: Some(1000.0),
            }),
            ..Self::bind9()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut prev: Option<SimDuration> = None;
        for off in &self.retry_schedule {
            if let Some(p) = prev {
                if *off <= p {
                    return Err("retry_schedule offsets must be strictly increasing".into());
                }
            }
            if *off >= self.overall_timeout {
                return Err("retry offset beyond overall_timeout".into());
            }
            prev = Some(*off);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DnsResult {
    Answer(Addr),
    Truncated,
    Servfail,
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DnsOutcome {
    pub result: DnsResult,
    pub resolved_at: SimTime,
    pub queries_sent: u32,
}

/// effective cache expiry for a record: now + min(ttl, cache_max_ttl);
/// ttl 0 is never cached.
pub fn cache_store(ttl_s: u64, now: SimTime, profile: &ResolverProfile) -> Option<SimTime> {
    if ttl_s == 0 {
        return None;
    }
    let ttl = SimDuration::from_secs(ttl_s);
    Some(now + ttl.min(profile.cache_max_ttl))
}

#[derive(Clone, Debug)]
struct CacheEntry {
    addr: Addr,
    expires: SimTime,
}

#[derive(Clone, Debug, Default)]
struct UpstreamHealth {
    consecutive_failures: u32,
    blocked_until: Option<SimTime>,
}

/// A caching stub resolver bound to one authoritative nameserver. The retry
/// exchange runs in virtual time against the nameserver's bucket state; the
/// caller supplies the flood picture covering the exchange span.
pub struct Resolver {
    pub profile: ResolverProfile,
    pub addr: Addr,
    cache: BTreeMap<String, CacheEntry>,
    health: BTreeMap<String, UpstreamHealth>,
}

impl Resolver {
    pub fn new(profile: ResolverProfile, addr: Addr) -> Self {
        profile.validate().expect("valid resolver profile");
        Resolver {
            profile,
            addr,
            cache: BTreeMap::new(),
            health: BTreeMap::new(),
        }
    }

    pub fn cached(&self, name: &str, now: SimTime) -> Option<Addr> {
        self.cache
            .get(name)
            .filter(|e| e.expires > now)
            .map(|e| e.addr)
    }

    pub fn flush(&mut self) {
        self.cache.clear();
        self.health.clear();
    }

    /// Resolves `name` against `ns`, walking the retry schedule in virtual
    /// time. TCP fallback after truncation is modeled as reliable.
    pub fn resolve(
        &mut self,
        name: &str,
        ns: &mut Nameserver,
        now: SimTime,
        floods: &[FloodSegment],
        rng: &mut ChaCha8Rng,
    ) -> DnsOutcome {
        if let Some(addr) = self.cached(name, now) {
            return DnsOutcome {
                result: DnsResult::Answer(addr),
                resolved_at: now,
                queries_sent: 0,
            };
        }
        let health = self.health.entry(name.to_string()).or_default();
        if let Some(until) = health.blocked_until {
            if now < until {
                // blocked: immediate servfail, zero upstream packets
                return DnsOutcome {
                    result: DnsResult::Servfail,
                    resolved_at: now,
                    queries_sent: 0,
                };
            }
        }
        let single_probe = health.blocked_until.is_some();
        let schedule: Vec<SimDuration> = if single_probe {
            vec![SimDuration::ZERO]
        } else {
            self.profile.retry_schedule.clone()
        };
        let mut queries = 0u32;
        for off in &schedule {
            let at = now + *off;
            queries += 1;
            let flood_rate = flood_rate_at(floods, at);
            let reply = ns.handle_query(self.addr, name, at, floods, flood_rate, rng);
            match reply {
                NsReply::Answer(addr) => {
                    self.note_success(name);
                    if let Some(exp) = cache_store(ns.record_ttl(name).unwrap_or(0), at, &self.profile)
                    {
                        self.cache
                            .insert(name.to_string(), CacheEntry { addr, expires: exp });
                    }
                    return DnsOutcome {
                        result: DnsResult::Answer(addr),
                        resolved_at: at,
                        queries_sent: queries,
                    };
                }
                NsReply::NxDomain => {
                    self.note_success(name);
                    return DnsOutcome {
                        result: DnsResult::Servfail,
                        resolved_at: at,
                        queries_sent: queries,
                    };
                }
                NsReply::Truncated => {
                    if self.profile.tcp_fallback {
                        // reliable TCP retry: the nameserver answers over TCP
                        self.note_success(name);
                        if let (NsReply::Answer(addr), Some(exp)) = (
                            ns.lookup(name),
                            cache_store(ns.record_ttl(name).unwrap_or(0), at, &self.profile),
                        ) {
                            self.cache
                                .insert(name.to_string(), CacheEntry { addr, expires: exp });
                            return DnsOutcome {
                                result: DnsResult::Answer(addr),
                                resolved_at: at,
                                queries_sent: queries,
                            };
                        }
                        return DnsOutcome {
                            result: DnsResult::Servfail,
                            resolved_at: at,
                            queries_sent: queries,
                        };
                    }
                    // no fallback: a truncated reply is useless, keep retrying
                }
                NsReply::Dropped => {}
            }
        }
        self.note_failure(name, queries, now);
        DnsOutcome {
            result: DnsResult::Timeout,
            resolved_at: now + self.profile.overall_timeout,
            queries_sent: queries,
        }
    }

    fn note_success(&mut self, name: &str) {
        let h = self.health.entry(name.to_string()).or_default();
        h.consecutive_failures = 0;
        h.blocked_until = None;
    }

    fn note_failure(&mut self, name: &str, queries: u32, now: SimTime) {
        let Some(bs) = self.profile.blocked_state.clone() else {
            return;
        };
        let h = self.health.entry(name.to_string()).or_default();
        h.consecutive_failures += queries;
        if h.consecutive_failures >= bs.threshold {
            h.blocked_until = Some(now + bs.probe_interval);
        }
    }
}

fn flood_rate_at(floods: &[FloodSegment], at: SimTime) -> f64 {
    floods
        .iter()
        .filter(|(s, e, _)| *s <= at && at < *e)
        .map(|(_, _, r)| *r)
        .sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeRow {
    pub rate: f64,
    pub responses_per_s: f64,
    pub answers_per_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DnsProbeReport {
    pub rows: Vec<ProbeRow>,
    pub slip_limit: Option<f64>,
    pub drop_limit: Option<f64>,
}

impl DnsProbeReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rate,responses_per_s,answers_per_s\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.1},{:.1}\n",
                r.rate, r.responses_per_s, r.answers_per_s
            ));
        }
        out
    }
}

/// Probes a nameserver at each rate for `probe_duration`, reporting steady-
/// state responses/s and answers/s. A limit is declared at the first rate
/// where the relevant response rate falls under 90% of the query rate; the
/// limit estimate is the steady-state rate itself, measured after a one-
/// second warm-up so the initial bucket burst is excluded.
pub fn probe_rate_limit(
    config: &NameserverConfig,
    client: Addr,
    name: &str,
    rates: &[f64],
    probe_duration: SimDuration,
    rng: &mut ChaCha8Rng,
) -> DnsProbeReport {
    let mut rows = Vec::new();
    let mut slip_limit = None;
    let mut drop_limit = None;
    for &rate in rates {
        let mut ns = Nameserver::new(config.clone());
        let total = (rate * probe_duration.as_secs_f64()).round() as u64;
        let warmup = SimTime::from_secs(1);
        let (mut responses, mut answers) = (0u64, 0u64);
        let mut counted = 0u64;
        for i in 0..total {
            let at = SimTime::from_secs_f64(i as f64 / rate);
            let reply = ns.handle_query(client, name, at, &[], 0.0, rng);
            if at < warmup {
                continue;
            }
            counted += 1;
            match reply {
                NsReply::Answer(_) | NsReply::NxDomain => {
                    responses += 1;
                    answers += 1;
                }
                NsReply::Truncated => responses += 1,
                NsReply::Dropped => {}
            }
        }
        let span = (probe_duration.as_secs_f64() - 1.0).max(1e-9);
        let resp_rate = responses as f64 / span;
        let ans_rate = answers as f64 / span;
        rows.push(ProbeRow {
            rate,
            responses_per_s: resp_rate,
            answers_per_s: ans_rate,
        });
        let counted_rate = counted as f64 / span;
        if counted_rate > 0.0 {
            if slip_limit.is_none() && ans_rate < 0.9 * counted_rate {
                slip_limit = Some(ans_rate);
            }
            if drop_limit.is_none() && resp_rate < 0.9 * counted_rate {
                drop_limit = Some(resp_rate);
            }
        }
    }
    DnsProbeReport {
        rows,
        slip_limit,
        drop_limit,
    }
}
