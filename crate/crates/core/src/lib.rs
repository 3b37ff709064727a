//! Deterministic discrete-event simulator and analysis toolkit for RPKI
//! downgrade attacks: relying parties, publication points, DNS rate
//! limiting, BGP route-origin validation, low-rate burst synchronisation
//! and delegation-chain stalling, plus the closed-form success-probability
//! analysis the simulator is cross-validated against.

pub mod analysis;
pub mod attacker;
pub mod bgp;
pub mod dns;
pub mod fabric;
pub mod net;
pub mod pp;
pub mod ratelimit;
pub mod rp;
pub mod rpki;
pub mod scenario;
pub mod sim;
pub mod time;
pub mod world;

pub use net::{Addr, Asn, NodeId, Prefix};
pub use time::{SimDuration, SimTime};
