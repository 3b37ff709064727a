//! Network addresses, prefixes and the simulated packet type.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

/// A simulated IPv4 address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Addr(pub u32);

impl Addr {
    pub fn new(a: u8, b: u8, c: u8, d: u8) -> Self {
        Addr(u32::from_be_bytes([a, b, c, d]))
    }
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0.to_be_bytes();
        write!(f, "{a}.{b}.{c}.{d}")
    }
}

impl fmt::Debug for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<Addr> for String {
    fn from(a: Addr) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for Addr {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for Addr {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split('.');
        let mut bytes = [0u8; 4];
        for b in &mut bytes {
            *b = parts
                .next()
                .ok_or_else(|| format!("bad address {s:?}"))?
                .parse::<u8>()
                .map_err(|_| format!("bad address {s:?}"))?;
        }
        if parts.next().is_some() {
            return Err(format!("bad address {s:?}"));
        }
        Ok(Addr(u32::from_be_bytes(bytes)))
    }
}

/// An IPv4 prefix. Lengths outside [0, 32] are rejected at construction.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Prefix {
    pub addr: Addr,
    pub len: u8,
}

impl Prefix {
    pub fn new(addr: Addr, len: u8) -> Result<Self, String> {
        if len > 32 {
            return Err(format!("prefix length {len} out of range"));
        }
        Ok(Prefix { addr, len })
    }

    fn mask(len: u8) -> u32 {
        if len == 0 {
            0
        } else {
            u32::MAX << (32 - len)
        }
    }

    /// True when `other` is equal to or more specific than `self`.
    pub fn covers(&self, other: &Prefix) -> bool {
        other.len >= self.len && (other.addr.0 & Self::mask(self.len)) == (self.addr.0 & Self::mask(self.len))
    }

    pub fn contains(&self, addr: Addr) -> bool {
        (addr.0 & Self::mask(self.len)) == (self.addr.0 & Self::mask(self.len))
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.len)
    }
}

impl fmt::Debug for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<Prefix> for String {
    fn from(p: Prefix) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Prefix {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for Prefix {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr, len) = s
            .split_once('/')
            .ok_or_else(|| format!("bad prefix {s:?}"))?;
        Prefix::new(
            addr.parse()?,
            len.parse().map_err(|_| format!("bad prefix {s:?}"))?,
        )
    }
}

/// AS number newtype.
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Debug, Default,
)]
#[serde(transparent)]
pub struct Asn(pub u32);

impl fmt::Display for Asn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AS{}", self.0)
    }
}

/// Identifies a simulated node (nameserver, resolver, publication point,
/// relying party, attacker, router).
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Debug,
)]
pub struct NodeId(pub u32);

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PacketKind {
    DnsQuery,
    DnsResponse,
    TcpSyn,
    TcpSynack,
    AppRequest,
    AppResponse,
}

/// Application payloads carried by packets. Wire formats are out of scope;
/// identity is abstract.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Payload {
    DnsQuery {
        name: String,
        /// ties the response back to the asking resolver's pending resolution
        txn: u64,
    },
    DnsResponse {
        name: String,
        txn: u64,
        result: DnsAnswer,
    },
    TcpSyn {
        conn: u64,
    },
    TcpSynack {
        conn: u64,
    },
    FetchRequest {
        domain: String,
        conn: u64,
    },
    FetchComplete {
        domain: String,
        conn: u64,
    },
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DnsAnswer {
    Address(Addr),
    Truncated,
    NxDomain,
}

/// A packet in flight. `src` may differ from `true_origin` only when the
/// sending node has the spoofing capability; the fabric enforces this.
#[derive(Clone, Debug)]
pub struct Packet {
    pub src: Addr,
    pub true_origin: NodeId,
    pub dst: Addr,
    pub kind: PacketKind,
    pub payload: Payload,
    pub size_bytes: u64,
    pub sent_at: SimTime,
}
