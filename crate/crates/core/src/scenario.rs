//! Scenario configuration: a TOML schema describing a complete world —
//! nameservers, publication points, repositories, relying parties, BGP
//! topology, and the attack — plus cross-reference validation and the
//! builder that turns a config into a runnable [`World`].
//!
//! Schema notes: durations and instants are integer milliseconds (the
//! simulator's native resolution); addresses and prefixes are dotted-quad
//! strings. Every diagnostic names the offending config key.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::attacker::{AttackPlan, BurstTarget, StallChainParams, StopCondition};
use crate::bgp::{Announcement, AsConfig, LinkKind, Topology};
use crate::dns::{Nameserver, NameserverConfig, Resolver, ResolverProfile, ZoneRecord};
use crate::net::{Addr, Asn, Prefix};
use crate::pp::{ClientView, PpBehavior, PpConfig, PublicationPoint, ServeBehavior};
use crate::rp::{RelyingParty, RelyingPartyProfile, Tal};
use crate::rpki::{
    build_delegation_chain, content_hash, Certificate, Manifest, PpUri, RepositoryTree, Resource,
    Roa, Transport, DEFAULT_ROA_VALIDITY,
};
use crate::time::{SimDuration, SimTime};
use crate::world::{Attack, HijackSpec, ManifestRegime, World};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration_ms: u64,
    #[serde(default)]
    pub nameservers: Vec<NsEntry>,
    #[serde(default)]
    pub publication_points: Vec<PpEntry>,
    #[serde(default)]
    pub repositories: Vec<RepoEntry>,
    #[serde(default)]
    pub relying_parties: Vec<RpEntry>,
    #[serde(default)]
    pub topology: Option<TopologyEntry>,
    #[serde(default)]
    pub hijack: Option<HijackEntry>,
    #[serde(default)]
    pub attack: Option<AttackEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsEntry {
    pub label: String,
    #[serde(default)]
    pub records: Vec<RecordEntry>,
    /// generate one record per domain of the named repository
    #[serde(default)]
    pub auto_from_repository: Option<String>,
    #[serde(default)]
    pub auto_value: Option<Addr>,
    #[serde(default = "default_ttl")]
    pub auto_ttl_s: u64,
    #[serde(default)]
    pub slip_limit: Option<f64>,
    #[serde(default)]
    pub drop_limit: Option<f64>,
}

fn default_ttl() -> u64 {
    300
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordEntry {
    pub name: String,
    pub ttl_s: u64,
    pub value: Addr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpEntry {
    pub label: String,
    /// counted as adversarial for stall accounting
    #[serde(default)]
    pub adversary: bool,
    #[serde(default)]
    pub syn_rate_limit: Option<f64>,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_bytes_per_s: u64,
    #[serde(default = "default_transport")]
    pub transport: Transport,
    /// uniform serving: one view for every client
    #[serde(default)]
    pub view: Option<ClientView>,
    /// selective serving: per-client views plus a default
    #[serde(default)]
    pub selective: Vec<SelectiveEntry>,
    #[serde(default)]
    pub default_view: Option<ClientView>,
}

fn default_bandwidth() -> u64 {
    crate::pp::DEFAULT_BENIGN_BANDWIDTH
}

fn default_transport() -> Transport {
    Transport::Rrdp
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectiveEntry {
    pub client: Addr,
    pub content: String,
    pub behavior: ServeBehavior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepoEntry {
    pub key: String,
    #[serde(default = "default_regime")]
    pub regime: ManifestRegime,
    pub kind: RepoKind,
}

fn default_regime() -> ManifestRegime {
    ManifestRegime::Static
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RepoKind {
    /// one certificate, one manifest, one ROA
    Single {
        cert: String,
        domain: String,
        pp: String,
        asn: u32,
        prefix: Prefix,
        roa_max_len: u8,
        manifest_valid_until_ms: u64,
        #[serde(default = "default_regen_threshold")]
        regeneration_threshold_ms: u64,
        #[serde(default = "default_regen_period")]
        regeneration_period_ms: u64,
    },
    /// generated delegation chain, `pp{N}.base_domain` per level
    Chain {
        depth: usize,
        width: usize,
        base_domain: String,
        pp: String,
        asn: u32,
        prefix: Prefix,
        validity_ms: u64,
    },
}

fn default_regen_threshold() -> u64 {
    crate::rpki::DEFAULT_REGENERATION_THRESHOLD.as_millis()
}

fn default_regen_period() -> u64 {
    crate::rpki::DEFAULT_MANIFEST_VALIDITY.as_millis()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileName {
    Routinator,
    Fort,
    Octorpki,
    RipeValidator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResolverName {
    Bind9,
    Unbound,
    PublicGoogle,
    PublicCloudflare,
    /// one query, no retries — scenario (1)'s n_retries = 1 regime
    SingleQuery,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RpEntry {
    pub name: String,
    pub profile: ProfileName,
    pub resolver: ResolverName,
    pub address: Addr,
    pub resolver_address: Addr,
    /// repository keys; the TAL root cert and domain derive from the tree
    pub tals: Vec<String>,
    #[serde(default)]
    pub t_sleep_override_ms: Option<u64>,
    #[serde(default)]
    pub strict_invalid_on_missing: bool,
    #[serde(default)]
    pub randomize_sleep_ms: Option<u64>,
    #[serde(default)]
    pub enforce_depth_cap: Option<u32>,
    #[serde(default)]
    pub first_refresh_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyEntry {
    pub ases: Vec<AsEntry>,
    /// (asn, asn, link kind)
    pub links: Vec<(u32, u32, LinkKind)>,
    #[serde(default)]
    pub route_server_rp: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsEntry {
    pub asn: u32,
    #[serde(default)]
    pub prefixes: Vec<Prefix>,
    #[serde(default)]
    pub addresses: Vec<Addr>,
    #[serde(default)]
    pub rov_rp: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HijackEntry {
    pub prefix: Prefix,
    pub origin: u32,
    pub observer: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackEntry {
    pub target: BurstTarget,
    pub r_attacker: f64,
    #[serde(default = "default_halfwidth")]
    pub window_halfwidth_ms: u64,
    #[serde(default = "default_aim_offset")]
    pub aim_offset_ms: u64,
    pub victim_rp: String,
    pub victim_prefix: Prefix,
    pub victim_domain: String,
    /// node label (nameserver or publication point) the bursts drain
    pub target_label: String,
    pub observe_domains: Vec<String>,
    #[serde(default)]
    pub arm_not_before_ms: Option<u64>,
    #[serde(default)]
    pub stall_chain: Option<StallChainEntry>,
    pub stop: StopCondition,
}

/// A stall chain to deploy at setup: a deep delegation chain served only to
/// the victim relying party, a flat view for everyone else, plus the
/// nameserver and publication point that host it. The chain's root TAL is
/// appended to the victim RP's trust anchors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StallChainEntry {
    pub depth: usize,
    pub per_level_hold_ms: u64,
    pub base_domain: String,
    pub ns_label: String,
    pub pp_label: String,
    pub asn: u32,
    pub prefix: Prefix,
    /// address every chain domain resolves to
    pub pp_value: Addr,
    #[serde(default = "default_chain_validity")]
    pub validity_ms: u64,
}

fn default_chain_validity() -> u64 {
    SimDuration::from_hours(24 * 30).as_millis()
}

fn default_halfwidth() -> u64 {
    15_000
}

fn default_aim_offset() -> u64 {
    4_000
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<ScenarioConfig, String> {
        toml::from_str(text).map_err(|e| format!("config parse error: {e}"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Builds the runnable world, checking every cross-reference. The
    /// returned duration is the configured run length.
    pub fn build(&self) -> Result<(World, SimDuration), String> {
        let seed = self.seed;
        let mut w = World::new(seed);
        if self.duration_ms == 0 {
            return Err("duration_ms: must be positive".into());
        }

        // repositories first: they define the domain universe
        let mut repo_pp: BTreeMap<String, String> = BTreeMap::new();
        for (i, repo) in self.repositories.iter().enumerate() {
            if w.trees.contains_key(&repo.key) {
                return Err(format!("repositories[{i}].key: duplicate key {:?}", repo.key));
            }
            let (tree, pp_label) = build_repo(repo)
                .map_err(|e| format!("repositories[{i}] ({:?}): {e}", repo.key))?;
            for d in tree.domain_map.keys() {
                w.domain_map.insert(d.clone(), pp_label.clone());
            }
            repo_pp.insert(repo.key.clone(), pp_label);
            if repo.regime != ManifestRegime::Static {
                w.regimes.insert(repo.key.clone(), repo.regime);
            }
            w.trees.insert(repo.key.clone(), tree);
        }

        // publication points
        let mut pp_labels: BTreeSet<String> = BTreeSet::new();
        for (i, pp) in self.publication_points.iter().enumerate() {
            if !pp_labels.insert(pp.label.clone()) {
                return Err(format!(
                    "publication_points[{i}].label: duplicate label {:?}",
                    pp.label
                ));
            }
            let behavior = match (&pp.view, pp.selective.is_empty(), &pp.default_view) {
                (Some(view), true, None) => PpBehavior::Uniform { view: view.clone() },
                (None, false, Some(default)) => PpBehavior::Selective {
                    map: pp
                        .selective
                        .iter()
                        .map(|s| {
                            (
                                s.client,
                                ClientView {
                                    content: s.content.clone(),
                                    behavior: s.behavior.clone(),
                                },
                            )
                        })
                        .collect(),
                    default: default.clone(),
                },
                _ => {
                    return Err(format!(
                        "publication_points[{i}] ({:?}): set either view, or selective + default_view",
                        pp.label
                    ))
                }
            };
            let domains: Vec<String> = w
                .domain_map
                .iter()
                .filter(|(_, l)| **l == pp.label)
                .map(|(d, _)| d.clone())
                .collect();
            if domains.is_empty() {
                return Err(format!(
                    "publication_points[{i}] ({:?}): no repository maps a domain to this label",
                    pp.label
                ));
            }
            let config = PpConfig {
                domains,
                syn_rate_limit: pp.syn_rate_limit,
                behavior,
                transport: pp.transport,
                default_bandwidth_bytes_per_s: pp.bandwidth_bytes_per_s,
            };
            config
                .validate()
                .map_err(|e| format!("publication_points[{i}] ({:?}): {e}", pp.label))?;
            if pp.adversary {
                w.adversary_pps.insert(pp.label.clone());
            }
            w.pps.insert(pp.label.clone(), PublicationPoint::new(config));
        }
        // every repo's pp label must exist
        for (key, label) in &repo_pp {
            if !w.pps.contains_key(label) {
                return Err(format!(
                    "repositories ({key:?}).kind.pp: unknown publication point {label:?}"
                ));
            }
        }
        // view content labels must name repositories
        for (i, pp) in self.publication_points.iter().enumerate() {
            let contents: Vec<&String> = pp
                .view
                .iter()
                .map(|v| &v.content)
                .chain(pp.selective.iter().map(|s| &s.content))
                .chain(pp.default_view.iter().map(|v| &v.content))
                .collect();
            for c in contents {
                if !w.trees.contains_key(c) {
                    return Err(format!(
                        "publication_points[{i}] ({:?}): view content {c:?} names no repository",
                        pp.label
                    ));
                }
            }
        }

        // nameservers
        for (i, ns) in self.nameservers.iter().enumerate() {
            let mut zone = ns.records
                .iter()
                .map(|r| ZoneRecord {
                    name: r.name.clone(),
                    ttl_s: r.ttl_s,
                    value: r.value,
                })
                .collect::<Vec<_>>();
            if let Some(repo) = &ns.auto_from_repository {
                let tree = w.trees.get(repo).ok_or_else(|| {
                    format!("nameservers[{i}].auto_from_repository: unknown repository {repo:?}")
                })?;
                let value = ns.auto_value.ok_or_else(|| {
                    format!("nameservers[{i}].auto_value: required with auto_from_repository")
                })?;
                for d in tree.domain_map.keys() {
                    zone.push(ZoneRecord {
                        name: d.clone(),
                        ttl_s: ns.auto_ttl_s,
                        value,
                    });
                }
            }
            let config = NameserverConfig {
                zone,
                slip_limit: ns.slip_limit,
                drop_limit: ns.drop_limit,
            };
            config
                .validate()
                .map_err(|e| format!("nameservers[{i}] ({:?}): {e}", ns.label))?;
            if w.nameservers.contains_key(&ns.label) {
                return Err(format!(
                    "nameservers[{i}].label: duplicate label {:?}",
                    ns.label
                ));
            }
            w.nameservers.insert(ns.label.clone(), Nameserver::new(config));
        }
        // every domain must be resolvable somewhere
        for domain in w.domain_map.keys() {
            if !w.nameservers.values().any(|ns| ns.has_record(domain)) {
                return Err(format!(
                    "nameservers: no zone record for repository domain {domain:?}"
                ));
            }
        }

        // relying parties
        let mut rp_names: BTreeSet<String> = BTreeSet::new();
        for (i, rp) in self.relying_parties.iter().enumerate() {
            if !rp_names.insert(rp.name.clone()) {
                return Err(format!(
                    "relying_parties[{i}].name: duplicate name {:?}",
                    rp.name
                ));
            }
            let mut profile = match rp.profile {
                ProfileName::Routinator => RelyingPartyProfile::routinator(),
                ProfileName::Fort => RelyingPartyProfile::fort(),
                ProfileName::Octorpki => RelyingPartyProfile::octorpki(),
                ProfileName::RipeValidator => RelyingPartyProfile::ripe_validator(),
            };
            if let Some(ms) = rp.t_sleep_override_ms {
                profile.t_sleep = SimDuration::from_millis(ms);
            }
            profile.mitigation.strict_invalid_on_missing = rp.strict_invalid_on_missing;
            profile.mitigation.randomize_sleep = rp.randomize_sleep_ms.map(SimDuration::from_millis);
            profile.mitigation.enforce_depth_cap = rp.enforce_depth_cap;
            let resolver_profile = match rp.resolver {
                ResolverName::Bind9 => ResolverProfile::bind9(),
                ResolverName::Unbound => ResolverProfile::unbound(),
                ResolverName::PublicGoogle => ResolverProfile::public_google(),
                ResolverName::PublicCloudflare => ResolverProfile::public_cloudflare(),
                ResolverName::SingleQuery => {
                    let mut p = ResolverProfile::bind9();
                    p.retry_schedule.truncate(1);
                    p.overall_timeout = SimDuration::from_secs(5);
                    p
                }
            };
            let mut tals = Vec::new();
            for key in &rp.tals {
                let tree = w.trees.get(key).ok_or_else(|| {
                    format!("relying_parties[{i}].tals: unknown repository key {key:?}")
                })?;
                let root = tree.tal.clone();
                let domain = tree
                    .certs
                    .get(&root)
                    .map(|c| c.pp_uri.domain.clone())
                    .ok_or_else(|| {
                        format!("relying_parties[{i}].tals: repository {key:?} has no root cert")
                    })?;
                tals.push(Tal {
                    root_cert: root,
                    root_domain: domain,
                });
            }
            let party = RelyingParty::new(
                &rp.name,
                profile,
                rp.address,
                Resolver::new(resolver_profile, rp.resolver_address),
                tals,
            );
            w.add_rp(party, SimTime(rp.first_refresh_ms));
        }

        // topology + hijack
        if let Some(topo) = &self.topology {
            let mut t = Topology::default();
            for (i, a) in topo.ases.iter().enumerate() {
                if let Some(rp) = &a.rov_rp {
                    if !rp_names.contains(rp) {
                        return Err(format!(
                            "topology.ases[{i}].rov_rp: unknown relying party {rp:?}"
                        ));
                    }
                }
                t.ases.insert(
                    Asn(a.asn),
                    AsConfig {
                        asn: Asn(a.asn),
                        prefixes: a.prefixes.clone(),
                        addresses: a.addresses.clone(),
                        rov_rp: a.rov_rp.clone(),
                    },
                );
            }
            for (i, (a, b, kind)) in topo.links.iter().enumerate() {
                for asn in [a, b] {
                    if !t.ases.contains_key(&Asn(*asn)) {
                        return Err(format!("topology.links[{i}]: unknown AS {asn}"));
                    }
                }
                t.links.push((Asn(*a), Asn(*b), *kind));
            }
            if let Some(rp) = &topo.route_server_rp {
                if !rp_names.contains(rp) {
                    return Err(format!(
                        "topology.route_server_rp: unknown relying party {rp:?}"
                    ));
                }
            }
            t.route_server_rp = topo.route_server_rp.clone();
            // every AS originates its own prefixes
            w.legit_origins = t
                .ases
                .values()
                .flat_map(|a| {
                    a.prefixes
                        .iter()
                        .map(|p| Announcement::originate(*p, a.asn))
                        .collect::<Vec<_>>()
                })
                .collect();
            w.topology = Some(t);
        }
        if let Some(h) = &self.hijack {
            let topo = w
                .topology
                .as_ref()
                .ok_or("hijack: requires a topology section")?;
            for (key, asn) in [("origin", h.origin), ("observer", h.observer)] {
                if !topo.ases.contains_key(&Asn(asn)) {
                    return Err(format!("hijack.{key}: unknown AS {asn}"));
                }
            }
            w.hijack = Some(HijackSpec {
                prefix: h.prefix,
                origin: Asn(h.origin),
                observer: Asn(h.observer),
            });
        }

        // attack
        if let Some(a) = &self.attack {
            if !rp_names.contains(&a.victim_rp) {
                return Err(format!(
                    "attack.victim_rp: unknown relying party {:?}",
                    a.victim_rp
                ));
            }
            if !w.domain_map.contains_key(&a.victim_domain) {
                return Err(format!(
                    "attack.victim_domain: unknown domain {:?}",
                    a.victim_domain
                ));
            }
            let mut stall_params = None;
            if let Some(s) = &a.stall_chain {
                if w.nameservers.contains_key(&s.ns_label) {
                    return Err(format!(
                        "attack.stall_chain.ns_label: label {:?} already in use",
                        s.ns_label
                    ));
                }
                if w.pps.contains_key(&s.pp_label) {
                    return Err(format!(
                        "attack.stall_chain.pp_label: label {:?} already in use",
                        s.pp_label
                    ));
                }
                let victim_addr = self
                    .relying_parties
                    .iter()
                    .find(|r| r.name == a.victim_rp)
                    .map(|r| r.address)
                    .expect("victim_rp checked above");
                let params = StallChainParams {
                    depth: s.depth,
                    per_level_hold: SimDuration::from_millis(s.per_level_hold_ms),
                };
                let dep = crate::attacker::deploy_stall_chain(
                    params,
                    &s.base_domain,
                    victim_addr,
                    Asn(s.asn),
                    s.prefix,
                    s.pp_value,
                    SimTime::ZERO,
                    SimDuration::from_millis(s.validity_ms),
                );
                for d in dep.deep_tree.domain_map.keys() {
                    if w.domain_map.contains_key(d) {
                        return Err(format!(
                            "attack.stall_chain.base_domain: chain domain {d:?} already mapped"
                        ));
                    }
                    w.domain_map.insert(d.clone(), s.pp_label.clone());
                }
                w.nameservers.insert(
                    s.ns_label.clone(),
                    Nameserver::new(NameserverConfig {
                        zone: dep.zone.clone(),
                        slip_limit: None,
                        drop_limit: None,
                    }),
                );
                w.pps
                    .insert(s.pp_label.clone(), PublicationPoint::new(dep.pp_config));
                w.adversary_pps.insert(s.pp_label.clone());
                w.trees
                    .insert(crate::attacker::STALL_DEEP_TREE.into(), dep.deep_tree);
                w.trees
                    .insert(crate::attacker::STALL_FLAT_TREE.into(), dep.flat_tree);
                let rp = w
                    .rps
                    .iter_mut()
                    .find(|r| r.name == a.victim_rp)
                    .expect("victim_rp checked above");
                rp.tals.push(Tal {
                    root_cert: dep.root_cert,
                    root_domain: dep.root_domain,
                });
                stall_params = Some(params);
            }
            let target_ok = match a.target {
                BurstTarget::PpSyn => w.pps.contains_key(&a.target_label),
                BurstTarget::NsDns | BurstTarget::PublicResolver => {
                    w.nameservers.contains_key(&a.target_label)
                }
            };
            if !target_ok {
                return Err(format!(
                    "attack.target_label: no node {:?} of the targeted kind",
                    a.target_label
                ));
            }
            for d in &a.observe_domains {
                if !w.nameservers.values().any(|ns| ns.has_record(d)) {
                    return Err(format!(
                        "attack.observe_domains: domain {d:?} served by no nameserver"
                    ));
                }
            }
            let mut plan = AttackPlan::new(a.target, a.r_attacker, a.stop);
            plan.stall_chain = stall_params;
            plan.validate().map_err(|e| format!("attack: {e}"))?;
            let mut attack = Attack::new(
                plan,
                SimDuration::from_millis(a.window_halfwidth_ms),
                &a.victim_rp,
                a.victim_prefix,
                &a.victim_domain,
                &a.target_label,
                a.observe_domains.iter().cloned(),
            );
            attack.arm_not_before = a.arm_not_before_ms.map(SimTime);
            attack.aim_offset = SimDuration::from_millis(a.aim_offset_ms);
            w.attack = Some(attack);
        }

        Ok((w, SimDuration::from_millis(self.duration_ms)))
    }
}

/// Materializes one repository entry into a tree plus its PP label.
fn build_repo(repo: &RepoEntry) -> Result<(RepositoryTree, String), String> {
    match &repo.kind {
        RepoKind::Single {
            cert,
            domain,
            pp,
            asn,
            prefix,
            roa_max_len,
            manifest_valid_until_ms,
            regeneration_threshold_ms,
            regeneration_period_ms,
        } => {
            if *roa_max_len < prefix.len {
                return Err(format!(
                    "kind.roa_max_len: {roa_max_len} shorter than the prefix ({})",
                    prefix.len
                ));
            }
            let mut tree = RepositoryTree {
                tal: cert.clone(),
                ..Default::default()
            };
            let roa_id = format!("{cert}-roa");
            let until = SimTime(*manifest_valid_until_ms);
            tree.certs.insert(
                cert.clone(),
                Certificate {
                    id: cert.clone(),
                    resources: Resource::new(Asn(*asn), [*prefix])
                        .map_err(|e| format!("kind.prefix: {e}"))?,
                    pp_uri: PpUri {
                        domain: domain.clone(),
                        transport: Transport::Rrdp,
                    },
                    children: vec![],
                    not_before: SimTime::ZERO,
                    not_after: SimTime::ZERO + DEFAULT_ROA_VALIDITY,
                },
            );
            tree.manifests.insert(
                cert.clone(),
                Manifest {
                    id: format!("{cert}-mft"),
                    covers: cert.clone(),
                    listed_objects: BTreeMap::from([(
                        roa_id.clone(),
                        content_hash(&roa_id, until),
                    )]),
                    valid_from: SimTime::ZERO,
                    valid_until: until,
                    regeneration_threshold: SimDuration(*regeneration_threshold_ms),
                    regeneration_period: SimDuration(*regeneration_period_ms),
                },
            );
            tree.roas.insert(
                roa_id.clone(),
                Roa {
                    id: roa_id,
                    issuer: cert.clone(),
                    prefix: *prefix,
                    asn: Asn(*asn),
                    max_len: *roa_max_len,
                    valid_until: SimTime::ZERO + DEFAULT_ROA_VALIDITY,
                },
            );
            tree.domain_map.insert(domain.clone(), pp.clone());
            tree.validate().map_err(|e| format!("kind: {e}"))?;
            Ok((tree, pp.clone()))
        }
        RepoKind::Chain {
            depth,
            width,
            base_domain,
            pp,
            asn,
            prefix,
            validity_ms,
        } => {
            if *depth == 0 || *width == 0 {
                return Err("kind.depth and kind.width must be positive".into());
            }
            let resources =
                Resource::new(Asn(*asn), [*prefix]).map_err(|e| format!("kind.prefix: {e}"))?;
            let frag = build_delegation_chain(
                *depth,
                *width,
                base_domain,
                &resources,
                SimTime::ZERO,
                SimDuration(*validity_ms),
            );
            let mut tree = RepositoryTree {
                tal: frag.top_level[0].clone(),
                certs: frag.certs,
                manifests: frag.manifests,
                roas: BTreeMap::new(),
                domain_map: BTreeMap::new(),
            };
            for d in &frag.domains {
                tree.domain_map.insert(d.clone(), pp.clone());
            }
            tree.validate().map_err(|e| format!("kind: {e}"))?;
            Ok((tree, pp.clone()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_config() -> &'static str {
        r#"
seed = 5
duration_ms = 93600000

[[nameservers]]
label = "victim-ns"
drop_limit = 60.0
records = [{ name = "pp.victim.example", ttl_s = 300, value = "192.0.2.10" }]

[[nameservers]]
label = "watch-ns"
auto_from_repository = "watch"
auto_value = "192.0.2.66"

[[publication_points]]
label = "victim-pp"
view = { content = "victim", behavior = { mode = "normal" } }

[[publication_points]]
label = "watch-pp"
view = { content = "watch", behavior = { mode = "normal" } }

[[repositories]]
key = "victim"
regime = { mode = "always-fresh", validity = 86400000 }
kind = { type = "single", cert = "victim-root", domain = "pp.victim.example", pp = "victim-pp", asn = 64500, prefix = "203.0.113.0/24", roa_max_len = 24, manifest_valid_until_ms = 86400000 }

[[repositories]]
key = "watch"
kind = { type = "chain", depth = 1, width = 1, base_domain = "watch.evil.example", pp = "watch-pp", asn = 64666, prefix = "203.0.113.0/25", validity_ms = 2592000000 }

[[relying_parties]]
name = "rp0"
profile = "routinator"
resolver = "bind9"
address = "198.51.100.2"
resolver_address = "198.51.100.3"
tals = ["victim", "watch"]

[topology]
route_server_rp = "rp0"
links = [[64500, 64777, "route-server"], [64666, 64777, "route-server"], [64500, 64666, "route-server"]]

[[topology.ases]]
asn = 64500
prefixes = ["203.0.113.0/24"]
addresses = ["203.0.113.10"]

[[topology.ases]]
asn = 64666
addresses = ["192.0.2.66"]

[[topology.ases]]
asn = 64777
prefixes = ["198.51.100.0/24"]
addresses = ["198.51.100.77"]

[hijack]
prefix = "203.0.113.0/25"
origin = 64666
observer = 64777

[attack]
target = "ns-dns"
r_attacker = 74820.0
victim_rp = "rp0"
victim_prefix = "203.0.113.0/24"
victim_domain = "pp.victim.example"
target_label = "victim-ns"
observe_domains = ["pp1.watch.evil.example"]
stop = { max-duration = 93600000 }
"#
    }

    #[test]
    fn round_trips_identically() {
        let parsed = ScenarioConfig::parse(sample_config()).unwrap();
        let re = ScenarioConfig::parse(&parsed.to_toml()).unwrap();
        assert_eq!(parsed, re);
    }

    #[test]
    fn builds_and_runs() {
        let config = ScenarioConfig::parse(sample_config()).unwrap();
        let (mut w, duration) = config.build().unwrap();
        assert_eq!(duration, SimDuration::from_millis(93_600_000));
        assert_eq!(w.rps.len(), 1);
        assert_eq!(w.trees.len(), 2);
        // short smoke run: a couple of healthy refreshes
        let summary = w.run(SimDuration::from_secs(1300));
        assert!(summary.refreshes_observed >= 2);
    }

    fn build_err(c: &ScenarioConfig) -> String {
        match c.build() {
            Ok(_) => panic!("expected a build error"),
            Err(e) => e,
        }
    }

    #[test]
    fn diagnostics_name_offending_keys() {
        let base = ScenarioConfig::parse(sample_config()).unwrap();

        let mut c = base.clone();
        c.attack.as_mut().unwrap().victim_rp = "nope".into();
        assert!(build_err(&c).contains("attack.victim_rp"));

        let mut c = base.clone();
        c.relying_parties[0].tals.push("ghost".into());
        let err = build_err(&c);
        assert!(err.contains("relying_parties[0].tals"), "{err}");

        let mut c = base.clone();
        c.nameservers[1].auto_from_repository = Some("ghost".into());
        assert!(build_err(&c).contains("nameservers[1].auto_from_repository"));

        let mut c = base.clone();
        c.topology.as_mut().unwrap().route_server_rp = Some("ghost".into());
        assert!(build_err(&c).contains("topology.route_server_rp"));

        let mut c = base.clone();
        c.publication_points[0].view = None;
        let err = build_err(&c);
        assert!(err.contains("publication_points[0]"), "{err}");

        // unknown field diagnostics come from the parser
        let err = ScenarioConfig::parse("seed = 1\nduration_ms = 1\nbogus = 3\n").unwrap_err();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn bundled_scenarios_parse_and_build() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios");
        let mut seen = 0;
        for entry in std::fs::read_dir(dir).expect("scenarios directory") {
            let path = entry.unwrap().path();
            if path.extension().and_then(|e| e.to_str()) != Some("toml") {
                continue;
            }
            let text = std::fs::read_to_string(&path).unwrap();
            let config = ScenarioConfig::parse(&text)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            config
                .build()
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
        assert!(seen >= 5, "expected the bundled scenario set, found {seen}");
    }
}
