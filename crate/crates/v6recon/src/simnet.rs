//! Deterministic simulated access-provider network, usable as a scan
//! transport.
//!
//! A topology is a set of customer prefix pools plus an infrastructure
//! behavior. Every quantity — which customer slots are occupied, each CPE's
//! WAN interface identifier, response latencies — derives from the scenario
//! seed by stateless hashing, so two builds from the same scenario are
//! identical and nothing needs materializing up front. The simulation owns
//! time: responses carry virtual delays and tests never sleep.
//!
//! Behavior per probe:
//! - hop limit exhausted en route: `time exceeded` from the infra router
//! - occupied customer, all-zero interface identifier (the subnet-router
//!   anycast): the CPE echo-replies from its WAN address, or answers
//!   `address unreachable`, per pool configuration
//! - occupied customer, nonzero interface identifier: `address unreachable`
//!   from the CPE (no host behind it)
//! - unoccupied slot: silence, or a routing loop that bounces the packet
//!   until its hop limit runs out and then emits `time exceeded` from the
//!   infra router, rate-limited per responder
//! - outside every pool: silence

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::{low_mask, Address128, Eui48, InterfaceIdentifier, Prefix};
use crate::codec;
use crate::engine::{Clock, Transport, TransportError, VirtualClock};
use crate::rng::mix;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("pools {0} and {1} overlap")]
    OverlappingPools(Prefix, Prefix),
    #[error("scenario: {0}")]
    BadScenario(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario json: {0}")]
    Json(String),
}

/// How interface identifiers are generated for the CPEs of a pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum IidMode {
    /// Modified EUI-64 from a synthetic MAC drawn from the OUI distribution.
    Eui64,
    /// Stable pseudorandom 64-bit value.
    Opaque,
    /// Small sequential integers from a start value.
    DhcpSequential { start: u64 },
}

/// What a CPE answers when its subnet-router anycast address is probed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpeReply {
    Echo,
    AddrUnreachable,
}

fn default_latency() -> u64 {
    1_000
}

/// One customer prefix pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub prefix: Prefix,
    pub customer_plen: u8,
    /// Fraction of customer slots that hold an active customer.
    pub occupancy: f64,
    pub iid_mode: IidMode,
    /// `(OUI, weight)` pairs for eui64 pools, e.g. `[["3c:a6:2f", 94], ...]`.
    #[serde(default)]
    pub oui_distribution: Vec<(String, u32)>,
    pub cpe_reply: CpeReply,
    /// Hops consumed between the scan source and this pool.
    pub distance_hops: u8,
    #[serde(default = "default_latency")]
    pub latency_micros: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfraMode {
    /// Unrouted space answers nothing.
    Silent,
    /// Unrouted space loops between two routers until the hop limit runs
    /// out, then emits `time exceeded`.
    RoutingLoop,
}

fn default_loop_hop_cost() -> u8 {
    1
}

fn default_error_rate_limit() -> f64 {
    1e9
}

/// Infrastructure behavior for space not routed to a customer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfraBehavior {
    pub mode: InfraMode,
    #[serde(default = "default_loop_hop_cost")]
    pub loop_hop_cost: u8,
    /// `time exceeded` budget per responder router, tokens per second.
    #[serde(default = "default_error_rate_limit")]
    pub error_rate_limit: f64,
    /// Hop limit in the embedded copy of an expired packet: 0 or 1,
    /// depending on whether the router embeds the packet as forwarded or
    /// as received.
    #[serde(default)]
    pub embedded_hop_limit: u8,
}

/// A full scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub infra_router: Address128,
    pub infra: InfraBehavior,
    pub pools: Vec<PoolSpec>,
}

impl Scenario {
    pub fn from_json(json: &str) -> Result<Self, SimError> {
        serde_json::from_str(json).map_err(|e| SimError::Json(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

// hash salts for the independent per-entity draws
const SALT_OCCUPANCY: u64 = 1;
const SALT_OUI: u64 = 2;
const SALT_MAC: u64 = 3;
const SALT_OPAQUE: u64 = 4;

struct PoolState {
    spec: PoolSpec,
    ouis: Vec<([u8; 3], u32)>,
    oui_weight_total: u64,
}

struct RateBucket {
    rate: f64,
    tokens: f64,
    last_micros: u64,
}

impl RateBucket {
    fn new(rate: f64) -> Self {
        // one initial token: the first error after idle always goes out
        Self {
            rate,
            tokens: 1.0,
            last_micros: 0,
        }
    }

    fn try_take(&mut self, now: u64) -> bool {
        let dt = now.saturating_sub(self.last_micros) as f64 / 1e6;
        self.last_micros = now;
        self.tokens = (self.tokens + dt * self.rate).min(self.rate.max(1.0));
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            true
        } else {
            false
        }
    }
}

/// A built topology: scenario plus the mutable rate-limiter state.
pub struct SimTopology {
    seed: u64,
    infra_router: Address128,
    infra: InfraBehavior,
    pools: Vec<PoolState>,
    error_bucket: RateBucket,
}

fn parse_oui(text: &str) -> Result<[u8; 3], SimError> {
    let parts: Vec<&str> = text.split([':', '-']).collect();
    if parts.len() != 3 {
        return Err(SimError::BadScenario(format!(
            "OUI {text:?} must have 3 octets"
        )));
    }
    let mut oui = [0u8; 3];
    for (i, p) in parts.iter().enumerate() {
        oui[i] = u8::from_str_radix(p, 16)
            .map_err(|_| SimError::BadScenario(format!("OUI {text:?} has a bad octet")))?;
    }
    Ok(oui)
}

/// Validate a scenario and build the deterministic topology.
pub fn build_topology(scenario: &Scenario) -> Result<SimTopology, SimError> {
    for (i, a) in scenario.pools.iter().enumerate() {
        for b in scenario.pools.iter().skip(i + 1) {
            if a.prefix.contains_prefix(&b.prefix) || b.prefix.contains_prefix(&a.prefix) {
                return Err(SimError::OverlappingPools(a.prefix, b.prefix));
            }
        }
    }
    let mut pools = Vec::with_capacity(scenario.pools.len());
    for spec in &scenario.pools {
        if spec.customer_plen < spec.prefix.length() || spec.customer_plen > 64 {
            return Err(SimError::BadScenario(format!(
                "customer prefix length {} must be within {}..=64",
                spec.customer_plen,
                spec.prefix.length()
            )));
        }
        if !(0.0..=1.0).contains(&spec.occupancy) {
            return Err(SimError::BadScenario("occupancy must be in 0..=1".into()));
        }
        let ouis: Vec<([u8; 3], u32)> = spec
            .oui_distribution
            .iter()
            .map(|(text, w)| Ok((parse_oui(text)?, *w)))
            .collect::<Result<_, SimError>>()?;
        let oui_weight_total: u64 = ouis.iter().map(|&(_, w)| w as u64).sum();
        if spec.iid_mode == IidMode::Eui64 && oui_weight_total == 0 {
            return Err(SimError::BadScenario(
                "eui64 pools need a weighted OUI distribution".into(),
            ));
        }
        pools.push(PoolState {
            spec: spec.clone(),
            ouis,
            oui_weight_total,
        });
    }
    if scenario.infra.embedded_hop_limit > 1 {
        return Err(SimError::BadScenario(
            "embedded_hop_limit must be 0 or 1".into(),
        ));
    }
    if scenario.infra.loop_hop_cost == 0 {
        return Err(SimError::BadScenario(
            "loop_hop_cost must be positive".into(),
        ));
    }
    Ok(SimTopology {
        seed: scenario.seed,
        infra_router: scenario.infra_router,
        infra: scenario.infra.clone(),
        pools,
        error_bucket: RateBucket::new(scenario.infra.error_rate_limit),
    })
}

/// Per-pool summary used by scenario inspection.
#[derive(Debug, Clone, Serialize)]
pub struct PoolSummary {
    pub prefix: Prefix,
    pub customer_plen: u8,
    pub slots: u64,
    pub occupied: u64,
    pub sample_cpe: Option<Address128>,
}

impl SimTopology {
    pub fn pool_count(&self) -> usize {
        self.pools.len()
    }

    pub fn infra_router(&self) -> Address128 {
        self.infra_router
    }

    /// Customer slots in a pool: 2^(customer_plen - pool_len).
    pub fn slot_count(&self, pool: usize) -> u64 {
        let spec = &self.pools[pool].spec;
        1u64 << (spec.customer_plen - spec.prefix.length())
    }

    /// Whether a customer slot holds an active customer; a pure function of
    /// (seed, pool, slot). Occupied iff the slot's uniform draw in [0, 1)
    /// falls below the pool's occupancy.
    pub fn occupied(&self, pool: usize, slot: u64) -> bool {
        let spec = &self.pools[pool].spec;
        let draw = mix(&[self.seed, pool as u64, slot, SALT_OCCUPANCY]);
        ((draw >> 11) as f64 / (1u64 << 53) as f64) < spec.occupancy
    }

    pub fn customer_prefix(&self, pool: usize, slot: u64) -> Prefix {
        let spec = &self.pools[pool].spec;
        let base = spec.prefix.address().value();
        let addr = base | ((slot as u128) << (128 - spec.customer_plen as u32));
        Prefix::containing(Address128::new(addr), spec.customer_plen)
    }

    fn wan_iid(&self, pool: usize, slot: u64) -> InterfaceIdentifier {
        let state = &self.pools[pool];
        match state.spec.iid_mode {
            IidMode::Eui64 => {
                let pick =
                    mix(&[self.seed, pool as u64, slot, SALT_OUI]) % state.oui_weight_total.max(1);
                let mut acc = 0u64;
                let mut oui = state.ouis[0].0;
                for &(candidate, w) in &state.ouis {
                    acc += w as u64;
                    if pick < acc {
                        oui = candidate;
                        break;
                    }
                }
                let low = mix(&[self.seed, pool as u64, slot, SALT_MAC]) & 0xff_ffff;
                let mac = Eui48::new([
                    oui[0],
                    oui[1],
                    oui[2],
                    (low >> 16) as u8,
                    (low >> 8) as u8,
                    low as u8,
                ]);
                InterfaceIdentifier::from_mac(mac)
            }
            IidMode::Opaque => {
                InterfaceIdentifier::new(mix(&[self.seed, pool as u64, slot, SALT_OPAQUE]))
            }
            IidMode::DhcpSequential { start } => InterfaceIdentifier::new(start.wrapping_add(slot)),
        }
    }

    /// The CPE's WAN address: first /64 of the customer prefix plus the
    /// generated interface identifier.
    pub fn cpe_wan_address(&self, pool: usize, slot: u64) -> Address128 {
        let prefix = self.customer_prefix(pool, slot);
        Address128::new(prefix.address().value() | self.wan_iid(pool, slot).value() as u128)
    }

    pub fn occupied_count(&self, pool: usize) -> u64 {
        (0..self.slot_count(pool))
            .filter(|&s| self.occupied(pool, s))
            .count() as u64
    }

    pub fn summarize(&self) -> Vec<PoolSummary> {
        (0..self.pools.len())
            .map(|i| {
                let occupied = self.occupied_count(i);
                let sample = (0..self.slot_count(i))
                    .find(|&s| self.occupied(i, s))
                    .map(|s| self.cpe_wan_address(i, s));
                PoolSummary {
                    prefix: self.pools[i].spec.prefix,
                    customer_plen: self.pools[i].spec.customer_plen,
                    slots: self.slot_count(i),
                    occupied,
                    sample_cpe: sample,
                }
            })
            .collect()
    }

    fn time_exceeded(&mut self, packet: &[u8], now: u64, delay: u64) -> Vec<(u64, Vec<u8>)> {
        if !self.error_bucket.try_take(now) {
            return Vec::new();
        }
        let mut embedded = packet.to_vec();
        embedded[7] = self.infra.embedded_hop_limit;
        match codec::build_error_response(3, 0, 0, self.infra_router, &embedded, 64) {
            Ok(response) => vec![(delay, response)],
            Err(_) => Vec::new(),
        }
    }

    /// Feed one packet into the network; returns `(delay_micros, response)`
    /// pairs. Malformed input yields nothing.
    pub fn handle_packet(&mut self, packet: &[u8], now_micros: u64) -> Vec<(u64, Vec<u8>)> {
        if packet.len() < 40 || packet[0] >> 4 != 6 {
            return Vec::new();
        }
        let hop_limit = packet[7];
        let dst = Address128::from_octets(packet[24..40].try_into().expect("length checked"));

        let Some(pool) = (0..self.pools.len()).find(|&i| self.pools[i].spec.prefix.contains(dst))
        else {
            return Vec::new(); // outside every pool
        };
        let spec_latency = self.pools[pool].spec.latency_micros;
        let distance = self.pools[pool].spec.distance_hops;

        // expired en route to the pool
        if hop_limit <= distance {
            return self.time_exceeded(packet, now_micros, spec_latency);
        }

        let spec = &self.pools[pool].spec;
        let slot_bits = spec.customer_plen - spec.prefix.length();
        let slot = ((dst.value() >> (128 - spec.customer_plen as u32)) & low_mask(slot_bits as u32))
            as u64;

        if self.occupied(pool, slot) {
            let wan = self.cpe_wan_address(pool, slot);
            let remaining = hop_limit - distance;
            let iid_zero = dst.value() as u64 == 0;
            let reply_mode = spec.cpe_reply;
            if iid_zero && reply_mode == CpeReply::Echo {
                return match codec::echo_reply_for(packet, wan, 64) {
                    Ok(reply) => vec![(spec_latency, reply)],
                    Err(_) => Vec::new(),
                };
            }
            // no host behind any other address; the anycast probe itself is
            // answered with the same error when the pool is configured so
            let mut embedded = packet.to_vec();
            embedded[7] = remaining;
            return match codec::build_error_response(1, 3, 0, wan, &embedded, 64) {
                Ok(response) => vec![(spec_latency, response)],
                Err(_) => Vec::new(),
            };
        }

        // unoccupied slot: infrastructure behavior
        match self.infra.mode {
            InfraMode::Silent => Vec::new(),
            InfraMode::RoutingLoop => {
                let remaining = (hop_limit - distance) as u64;
                let traversals = remaining / self.infra.loop_hop_cost as u64;
                let delay = spec_latency + traversals * 50;
                self.time_exceeded(packet, now_micros, delay)
            }
        }
    }
}

/// Adapter wiring a topology to the scan engine. Sends run the simulation
/// and queue responses at their virtual due times; polls deliver everything
/// that has matured on the shared clock.
pub struct SimTransport {
    topology: SimTopology,
    clock: VirtualClock,
    pending: BinaryHeap<Reverse<(u64, u64, Vec<u8>)>>,
    seq: u64,
}

impl SimTransport {
    pub fn new(topology: SimTopology, clock: VirtualClock) -> Self {
        Self {
            topology,
            clock,
            pending: BinaryHeap::new(),
            seq: 0,
        }
    }

    pub fn topology(&self) -> &SimTopology {
        &self.topology
    }
}

impl Transport for SimTransport {
    fn send(&mut self, packet: &[u8]) -> Result<(), TransportError> {
        let now = self.clock.now_micros();
        for (delay, response) in self.topology.handle_packet(packet, now) {
            self.pending
                .push(Reverse((now + delay, self.seq, response)));
            self.seq += 1;
        }
        Ok(())
    }

    fn poll_received(&mut self) -> Result<Vec<Vec<u8>>, TransportError> {
        let now = self.clock.now_micros();
        let mut out = Vec::new();
        while let Some(Reverse((due, _, _))) = self.pending.peek() {
            if *due > now {
                break;
            }
            let Reverse((_, _, packet)) = self.pending.pop().expect("peeked");
            out.push(packet);
        }
        Ok(out)
    }
}
