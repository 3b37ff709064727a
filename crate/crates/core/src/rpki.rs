//! Abstract RPKI object model: certificates, manifests, ROAs and delegation
//! trees with validity windows.
//!
//! Objects carry content hashes, not signatures; cryptographic validation is
//! modeled as always-passing for well-formed objects. The attacks exploit
//! availability and timing, never forged signatures.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{Asn, Prefix};
use crate::time::{SimDuration, SimTime};

pub const DEFAULT_MANIFEST_VALIDITY: SimDuration = SimDuration(24 * 3_600_000);
pub const DEFAULT_REGENERATION_THRESHOLD: SimDuration = SimDuration(6 * 3_600_000);
/// Median ROA validity observed in the wild: 545 days.
pub const DEFAULT_ROA_VALIDITY: SimDuration = SimDuration(545 * 24 * 3_600_000);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transport {
    Rrdp,
    Rsync,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PpUri {
    pub domain: String,
    pub transport: Transport,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resource {
    pub asn: Asn,
    pub prefixes: BTreeSet<Prefix>,
}

impl Resource {
    pub fn new(asn: Asn, prefixes: impl IntoIterator<Item = Prefix>) -> Result<Self, TreeError> {
        let prefixes: BTreeSet<Prefix> = prefixes.into_iter().collect();
        if prefixes.is_empty() {
            return Err(TreeError::EmptyResource);
        }
        Ok(Resource { asn, prefixes })
    }

    /// Subset check; the adversary re-delegates the same prefix down the
    /// chain, so equality is the common case.
    pub fn contained_in(&self, parent: &Resource) -> bool {
        self.prefixes
            .iter()
            .all(|p| parent.prefixes.iter().any(|pp| pp.covers(p)))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub id: String,
    pub resources: Resource,
    pub pp_uri: PpUri,
    pub children: Vec<String>,
    pub not_before: SimTime,
    pub not_after: SimTime,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub id: String,
    pub covers: String,
    pub listed_objects: BTreeMap<String, u64>,
    pub valid_from: SimTime,
    pub valid_until: SimTime,
    pub regeneration_threshold: SimDuration,
    pub regeneration_period: SimDuration,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Roa {
    pub id: String,
    pub issuer: String,
    pub prefix: Prefix,
    pub asn: Asn,
    pub max_len: u8,
    pub valid_until: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectState {
    Current,
    Stale,
    Expired,
}

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("resource with no prefixes")]
    EmptyResource,
    #[error("unknown object id {0:?}")]
    UnknownObject(String),
    #[error("certificate cycle involving {0:?}")]
    Cycle(String),
    #[error("certificate {child:?} exceeds parent {parent:?} resources")]
    ResourceExcess { child: String, parent: String },
    #[error("certificate {0:?} unreachable from the trust anchor")]
    Unreachable(String),
    #[error("publication point domain {0:?} has no hosting node")]
    UnmappedDomain(String),
    #[error("invalid validity window on {0:?}")]
    BadValidity(String),
}

pub fn content_hash(id: &str, valid_until: SimTime) -> u64 {
    let mut h = DefaultHasher::new();
    id.hash(&mut h);
    valid_until.as_millis().hash(&mut h);
    h.finish()
}

/// A full repository: object stores plus the map from publication-point
/// domain to the name of the node hosting it.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RepositoryTree {
    pub tal: String,
    pub certs: BTreeMap<String, Certificate>,
    /// keyed by the id of the certificate each manifest covers (one
    /// manifest per certificate)
    pub manifests: BTreeMap<String, Manifest>,
    pub roas: BTreeMap<String, Roa>,
    pub domain_map: BTreeMap<String, String>,
}

impl RepositoryTree {
    pub fn manifest_for_cert(&self, cert_id: &str) -> Option<&Manifest> {
        self.manifests.get(cert_id)
    }

    pub fn roas_under_cert<'a>(&'a self, cert_id: &'a str) -> impl Iterator<Item = &'a Roa> + 'a {
        self.roas.values().filter(move |r| r.issuer == cert_id)
    }

    /// current | stale | expired for any object id.
    pub fn object_state(&self, id: &str, now: SimTime) -> Result<ObjectState, TreeError> {
        let (own_until, issuer) = if let Some(c) = self.certs.get(id) {
            (c.not_after, None)
        } else if let Some(r) = self.roas.get(id) {
            (r.valid_until, Some(r.issuer.clone()))
        } else if let Some(m) = self.manifests.values().find(|m| m.id == id) {
            (m.valid_until, None)
        } else {
            return Err(TreeError::UnknownObject(id.to_string()));
        };
        if own_until < now {
            return Ok(ObjectState::Expired);
        }
        let covering = match issuer {
            Some(cert) => self.manifest_for_cert(&cert),
            None => self
                .certs
                .get(id)
                .and_then(|c| self.manifest_for_cert(&c.id)),
        };
        if let Some(m) = covering {
            if m.valid_until < now {
                return Ok(ObjectState::Stale);
            }
        }
        Ok(ObjectState::Current)
    }

    /// Structural checks: acyclic by certificate id, everything reachable
    /// from the TAL, children inside parent resources, domains mapped.
    pub fn validate(&self) -> Result<(), TreeError> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.tal.clone()];
        while let Some(id) = stack.pop() {
            if !seen.insert(id.clone()) {
                return Err(TreeError::Cycle(id));
            }
            let cert = self
                .certs
                .get(&id)
                .ok_or_else(|| TreeError::UnknownObject(id.clone()))?;
            if cert.not_before >= cert.not_after {
                return Err(TreeError::BadValidity(id.clone()));
            }
            if !self.domain_map.contains_key(&cert.pp_uri.domain) {
                return Err(TreeError::UnmappedDomain(cert.pp_uri.domain.clone()));
            }
            for child_id in &cert.children {
                let child = self
                    .certs
                    .get(child_id)
                    .ok_or_else(|| TreeError::UnknownObject(child_id.clone()))?;
                if !child.resources.contained_in(&cert.resources) {
                    return Err(TreeError::ResourceExcess {
                        child: child_id.clone(),
                        parent: id.clone(),
                    });
                }
                stack.push(child_id.clone());
            }
        }
        for id in self.certs.keys() {
            if !seen.contains(id) {
                return Err(TreeError::Unreachable(id.clone()));
            }
        }
        Ok(())
    }

    /// Merges a generated fragment into this tree, attaching its top-level
    /// certificates as children of `parent`.
    pub fn attach(&mut self, parent: &str, fragment: TreeFragment, host_node: &str) {
        for top in &fragment.top_level {
            self.certs
                .get_mut(parent)
                .expect("parent cert exists")
                .children
                .push(top.clone());
        }
        for (id, c) in fragment.certs {
            self.domain_map
                .insert(c.pp_uri.domain.clone(), host_node.to_string());
            self.certs.insert(id, c);
        }
        for (id, m) in fragment.manifests {
            self.manifests.insert(id, m);
        }
    }
}

/// Output of the delegation-chain generator.
#[derive(Clone, Debug, Default)]
pub struct TreeFragment {
    pub top_level: Vec<String>,
    pub certs: BTreeMap<String, Certificate>,
    pub manifests: BTreeMap<String, Manifest>,
    pub domains: Vec<String>,
}

/// Builds `depth` levels of certificates, each level delegating the *same*
/// resources to `width` children, each child at a distinct subdomain of
/// `base_domain`. All subdomains may map to one address; from the relying
/// party's perspective they are distinct publication points.
pub fn build_delegation_chain(
    depth: usize,
    width: usize,
    base_domain: &str,
    hold_resources: &Resource,
    valid_from: SimTime,
    validity: SimDuration,
) -> TreeFragment {
    assert!(depth >= 1 && width >= 1);
    let mut frag = TreeFragment::default();
    let mut counter = 0usize;
    // parents of the level being generated; None entries mean "top level"
    let mut parents: Vec<Option<String>> = vec![None];
    for _level in 1..=depth {
        let mut next_parents = Vec::new();
        for parent in &parents {
            for _ in 0..width {
                counter += 1;
                let domain = format!("pp{counter}.{base_domain}");
                let id = format!("chain-cert-{counter}");
                let cert = Certificate {
                    id: id.clone(),
                    resources: hold_resources.clone(),
                    pp_uri: PpUri {
                        domain: domain.clone(),
                        transport: Transport::Rrdp,
                    },
                    children: Vec::new(),
                    not_before: valid_from,
                    not_after: valid_from + validity,
                };
                let mft = Manifest {
                    id: format!("chain-mft-{counter}"),
                    covers: id.clone(),
                    listed_objects: BTreeMap::from([(
                        id.clone(),
                        content_hash(&id, valid_from + validity),
                    )]),
                    valid_from,
                    valid_until: valid_from + validity,
                    regeneration_threshold: DEFAULT_REGENERATION_THRESHOLD,
                    regeneration_period: DEFAULT_MANIFEST_VALIDITY,
                };
                match parent {
                    Some(p) => frag
                        .certs
                        .get_mut(p)
                        .expect("parent generated earlier")
                        .children
                        .push(id.clone()),
                    None => frag.top_level.push(id.clone()),
                }
                frag.manifests.insert(id.clone(), mft);
                frag.domains.push(domain);
                next_parents.push(Some(id.clone()));
                frag.certs.insert(id.clone(), cert);
            }
        }
        parents = next_parents;
    }
    frag
}

/// Krill-style regeneration: once the remaining validity drops below the
/// threshold, the manifest is re-issued for a full period from `now`.
pub fn maintain_manifest(m: &Manifest, now: SimTime) -> Manifest {
    if m.valid_until.since(now) < m.regeneration_threshold {
        let mut renewed = m.clone();
        renewed.valid_from = now;
        renewed.valid_until = now + m.regeneration_period;
        for (id, hash) in renewed.listed_objects.clone() {
            let _ = hash;
            renewed
                .listed_objects
                .insert(id.clone(), content_hash(&id, renewed.valid_until));
        }
        renewed
    } else {
        m.clone()
    }
}
