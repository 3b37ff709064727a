//! Publication-point server model: RRDP/rsync serving over a simulated TCP
//! handshake, SYN rate limiting, and the adversarial behaviors (idle-stall,
//! throttle/inflate, selective per-client content).

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::net::Addr;
use crate::ratelimit::{FloodSegment, TokenBucket};
use crate::rpki::Transport;
use crate::time::{SimDuration, SimTime};

/// What a client observes from this PP: which repository content label it
/// is served, and how the serving behaves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientView {
    /// key into the scenario's repository fragments
    pub content: String,
    pub behavior: ServeBehavior,
}

/// Per-fetch serving behavior (the non-selective variants).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ServeBehavior {
    Normal,
    StallIdle {
        hold: SimDuration,
    },
    Throttle {
        bandwidth_bytes_per_s: u64,
        inflate_to_bytes: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PpBehavior {
    Uniform {
        view: ClientView,
    },
    /// Content and behavior chosen by client address; unmapped clients get
    /// the default view. This is how the stall chain is restricted to the
    /// victim RP while other RPs see a flat, fast repository.
    Selective {
        map: BTreeMap<Addr, ClientView>,
        default: ClientView,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PpConfig {
    pub domains: Vec<String>,
    pub syn_rate_limit: Option<f64>,
    pub behavior: PpBehavior,
    pub transport: Transport,
    /// bandwidth used for Normal and StallIdle bodies
    pub default_bandwidth_bytes_per_s: u64,
}

pub const DEFAULT_BENIGN_BANDWIDTH: u64 = 10_000_000; // 10 MB/s

impl PpConfig {
    pub fn benign(domains: Vec<String>) -> Self {
        PpConfig {
            domains,
            syn_rate_limit: None,
            behavior: PpBehavior::Uniform {
                view: ClientView {
                    content: "default".into(),
                    behavior: ServeBehavior::Normal,
                },
            },
            transport: Transport::Rrdp,
            default_bandwidth_bytes_per_s: DEFAULT_BENIGN_BANDWIDTH,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.default_bandwidth_bytes_per_s == 0 {
            return Err("default bandwidth must be positive".into());
        }
        let check = |v: &ClientView| -> Result<(), String> {
            match &v.behavior {
                ServeBehavior::StallIdle { hold } if hold.as_millis() == 0 => {
                    Err("stall hold must be positive".into())
                }
                ServeBehavior::Throttle {
                    bandwidth_bytes_per_s,
                    inflate_to_bytes,
                } if *bandwidth_bytes_per_s == 0 || *inflate_to_bytes == 0 => {
                    Err("throttle bandwidth and size must be positive".into())
                }
                _ => Ok(()),
            }
        };
        match &self.behavior {
            PpBehavior::Uniform { view } => check(view),
            PpBehavior::Selective { map, default } => {
                for v in map.values() {
                    check(v)?;
                }
                check(default)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FetchState {
    Handshake,
    Serving,
    Done,
    TimedOut,
}

#[derive(Clone, Debug)]
pub struct FetchTiming {
    pub first_byte_at: SimTime,
    pub done_at: SimTime,
}

/// A publication point with a per-client SYN token bucket.
#[derive(Debug)]
pub struct PublicationPoint {
    pub config: PpConfig,
    syn_buckets: BTreeMap<Addr, TokenBucket>,
}

impl PublicationPoint {
    pub fn new(config: PpConfig) -> Self {
        config.validate().expect("valid pp config");
        PublicationPoint {
            config,
            syn_buckets: BTreeMap::new(),
        }
    }

    /// View served to this client; pure in the client address.
    pub fn view_for(&self, client: Addr) -> &ClientView {
        match &self.config.behavior {
            PpBehavior::Uniform { view } => view,
            PpBehavior::Selective { map, default } => map.get(&client).unwrap_or(default),
        }
    }

    /// One SYN: token available (or won under flood) → synack; else silent
    /// drop, the client retries per its OS profile.
    pub fn handle_syn(
        &mut self,
        src: Addr,
        now: SimTime,
        floods: &[FloodSegment],
        flood_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> bool {
        let Some(limit) = self.config.syn_rate_limit else {
            return true;
        };
        self.syn_buckets
            .entry(src)
            .or_insert_with(|| TokenBucket::per_second(limit))
            .try_take_flooded(now, floods, flood_rate, 0.0, rng)
    }

    /// Serving schedule for one fetch of `size_bytes`, handshake already
    /// done at `start`. Stalling PPs do not throttle the handshake: instant
    /// synack, slow body.
    pub fn serve_fetch(&self, client: Addr, size_bytes: u64, start: SimTime) -> FetchTiming {
        let bw = self.config.default_bandwidth_bytes_per_s;
        match &self.view_for(client).behavior {
            ServeBehavior::Normal => {
                let dur = SimDuration::from_secs_f64(size_bytes as f64 / bw as f64);
                FetchTiming {
                    first_byte_at: start,
                    done_at: start + dur,
                }
            }
            ServeBehavior::StallIdle { hold } => {
                let dur = SimDuration::from_secs_f64(size_bytes as f64 / bw as f64);
                FetchTiming {
                    first_byte_at: start + *hold,
                    done_at: start + *hold + dur,
                }
            }
            ServeBehavior::Throttle {
                bandwidth_bytes_per_s,
                inflate_to_bytes,
            } => {
                let dur = SimDuration::from_secs_f64(
                    *inflate_to_bytes as f64 / *bandwidth_bytes_per_s as f64,
                );
                FetchTiming {
                    first_byte_at: start,
                    done_at: start + dur,
                }
            }
        }
    }
}

/// Linux tcp_syn_retries backoff: initial SYN plus doubling retransmit
/// gaps — offsets 0, 1, 3, 7, 15, 31 s for the default 6 packets.
pub fn linux_syn_offsets(retries: u32) -> Vec<SimDuration> {
    let mut out = Vec::with_capacity(retries as usize);
    let mut t = 0u64;
    let mut gap = 1u64;
    for _ in 0..retries {
        out.push(SimDuration::from_secs(t));
        t += gap;
        gap *= 2;
    }
    out
}

/// One TCP connection attempt against the PP: SYNs per the Linux backoff,
/// connect succeeds at the first admitted SYN (+synack RTT is the fabric's
/// concern, not modeled here).
pub fn attempt_connect(
    pp: &mut PublicationPoint,
    client: Addr,
    start: SimTime,
    retries: u32,
    floods: &[FloodSegment],
    rng: &mut ChaCha8Rng,
) -> Option<SimTime> {
    for off in linux_syn_offsets(retries) {
        let at = start + off;
        let flood_rate = floods
            .iter()
            .filter(|(s, e, _)| *s <= at && at < *e)
            .map(|(_, _, r)| *r)
            .sum();
        if pp.handle_syn(client, at, floods, flood_rate, rng) {
            return Some(at);
        }
    }
    None
}

#[derive(Clone, Debug, Serialize)]
pub struct SynProbeRow {
    pub rate: f64,
    pub synacks_per_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SynProbeReport {
    pub rows: Vec<SynProbeRow>,
    pub limit: Option<f64>,
}

impl SynProbeReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rate,synacks_per_s\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.1}\n", r.rate, r.synacks_per_s));
        }
        out
    }
}

/// Probes a PP's SYN limit: 6-second trains at each rate, limit declared
/// when the synack rate falls under 90% of the SYN rate; the estimate is
/// the steady-state synack rate after a one-second warm-up.
pub fn probe_syn_limit(
    config: &PpConfig,
    client: Addr,
    rates: &[f64],
    duration: SimDuration,
    rng: &mut ChaCha8Rng,
) -> SynProbeReport {
    let mut rows = Vec::new();
    let mut limit = None;
    for &rate in rates {
        let mut pp = PublicationPoint::new(config.clone());
        let total = (rate * duration.as_secs_f64()).round() as u64;
        let warmup = SimTime::from_secs(1);
        let (mut acks, mut counted) = (0u64, 0u64);
        for i in 0..total {
            let at = SimTime::from_secs_f64(i as f64 / rate);
            let ok = pp.handle_syn(client, at, &[], 0.0, rng);
            if at < warmup {
                continue;
            }
            counted += 1;
            if ok {
                acks += 1;
            }
        }
        let span = (duration.as_secs_f64() - 1.0).max(1e-9);
        let ack_rate = acks as f64 / span;
        rows.push(SynProbeRow {
            rate,
            synacks_per_s: ack_rate,
        });
        let counted_rate = counted as f64 / span;
        if limit.is_none() && counted_rate > 0.0 && ack_rate < 0.9 * counted_rate {
            limit = Some(ack_rate);
        }
    }
    SynProbeReport { rows, limit }
}

/// A domain is vulnerable to SYN-limit blocking only when every server
/// behind it is rate-limited; one unlimited server keeps it reachable.
pub fn domain_vulnerable(server_limits: &[Option<f64>]) -> bool {
    !server_limits.is_empty() && server_limits.iter().all(|l| l.is_some())
}
