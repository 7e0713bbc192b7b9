//! Scan orchestration: paced probe transmission over a schedule, stateless
//! response validation, and per-range result collection.
//!
//! The loop is single-threaded by design: one iteration sends at most one
//! probe (token-bucket paced) and then drains the transport. Receiving can
//! never back-pressure sending because nothing about a response is needed
//! to build the next probe — attribution runs entirely off the token. Time
//! is behind the [`Clock`] trait so simulated scans run on a virtual clock
//! and never sleep.

use std::cell::Cell;
use std::rc::Rc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::Address128;
use crate::codec::{
    self, build_probe, hex_dump, verify_and_extract, MacKey, ParsedResponse, VerifyError,
};
use crate::schedule::{
    decode_token, encode_token, make_schedule, range_target, ProbeToken, ScheduleError, TargetRange,
};
use crate::timefmt::rfc3339_utc_millis;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("transport is closed")]
    Closed,
    #[error("transport error: {0}")]
    Io(String),
}

/// Packet-level transport abstraction. `send` hands one whole IPv6 packet
/// to the wire (or the simulation); `poll_received` returns zero or more
/// whole packets that have arrived since the last poll.
pub trait Transport {
    fn send(&mut self, packet: &[u8]) -> Result<(), TransportError>;
    fn poll_received(&mut self) -> Result<Vec<Vec<u8>>, TransportError>;
}

/// Monotonic scan clock. `now_micros` starts at zero when the clock is
/// created; `unix_base_micros` anchors it to wall time for timestamps.
pub trait Clock {
    fn now_micros(&self) -> u64;
    /// Block (or jump) until the given instant on this clock.
    fn advance_to(&mut self, micros: u64);
    fn unix_base_micros(&self) -> u64;
}

/// Wall-clock implementation used for live and benchmark runs.
pub struct RealClock {
    start: Instant,
    base_unix_micros: u64,
}

impl RealClock {
    pub fn new() -> Self {
        Self {
            start: Instant::now(),
            base_unix_micros: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_micros() as u64)
                .unwrap_or(0),
        }
    }
}

impl Default for RealClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for RealClock {
    fn now_micros(&self) -> u64 {
        self.start.elapsed().as_micros() as u64
    }

    fn advance_to(&mut self, micros: u64) {
        let now = self.now_micros();
        if micros > now {
            std::thread::sleep(Duration::from_micros(micros - now));
        }
    }

    fn unix_base_micros(&self) -> u64 {
        self.base_unix_micros
    }
}

/// Virtual clock for deterministic simulated scans: advancing is a jump,
/// never a sleep. The epoch base is fixed so archives are reproducible.
#[derive(Clone)]
pub struct VirtualClock {
    now: Rc<Cell<u64>>,
}

/// 2020-01-01T00:00:00Z.
pub const VIRTUAL_EPOCH_MICROS: u64 = 1_577_836_800_000_000;

impl VirtualClock {
    pub fn new() -> Self {
        Self {
            now: Rc::new(Cell::new(0)),
        }
    }

    /// A handle observing (and advancing with) the same timeline.
    pub fn share(&self) -> Self {
        Self {
            now: Rc::clone(&self.now),
        }
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for VirtualClock {
    fn now_micros(&self) -> u64 {
        self.now.get()
    }

    fn advance_to(&mut self, micros: u64) {
        if micros > self.now.get() {
            self.now.set(micros);
        }
    }

    fn unix_base_micros(&self) -> u64 {
        VIRTUAL_EPOCH_MICROS
    }
}

/// Discards everything, receives nothing.
#[derive(Debug, Default)]
pub struct NullTransport {
    pub sent: u64,
}

impl Transport for NullTransport {
    fn send(&mut self, _packet: &[u8]) -> Result<(), TransportError> {
        self.sent += 1;
        Ok(())
    }

    fn poll_received(&mut self) -> Result<Vec<Vec<u8>>, TransportError> {
        Ok(Vec::new())
    }
}

/// Returns exactly what was sent.
#[derive(Debug, Default)]
pub struct LoopbackTransport {
    queue: Vec<Vec<u8>>,
}

impl Transport for LoopbackTransport {
    fn send(&mut self, packet: &[u8]) -> Result<(), TransportError> {
        self.queue.push(packet.to_vec());
        Ok(())
    }

    fn poll_received(&mut self) -> Result<Vec<Vec<u8>>, TransportError> {
        Ok(std::mem::take(&mut self.queue))
    }
}

/// Answers every probe with an echo reply from the probed address itself.
/// The cheapest closed loop that exercises the full validation path.
#[derive(Debug, Default)]
pub struct EchoTransport {
    queue: Vec<Vec<u8>>,
}

impl Transport for EchoTransport {
    fn send(&mut self, packet: &[u8]) -> Result<(), TransportError> {
        let dst = Address128::from_octets(
            packet
                .get(24..40)
                .ok_or(TransportError::Io("short packet".into()))?
                .try_into()
                .expect("length checked"),
        );
        let reply = codec::echo_reply_for(packet, dst, 64)
            .map_err(|e| TransportError::Io(e.to_string()))?;
        self.queue.push(reply);
        Ok(())
    }

    fn poll_received(&mut self) -> Result<Vec<Vec<u8>>, TransportError> {
        Ok(std::mem::take(&mut self.queue))
    }
}

/// Always fails; models a dead interface.
#[derive(Debug, Default)]
pub struct ClosedTransport;

impl Transport for ClosedTransport {
    fn send(&mut self, _packet: &[u8]) -> Result<(), TransportError> {
        Err(TransportError::Closed)
    }

    fn poll_received(&mut self) -> Result<Vec<Vec<u8>>, TransportError> {
        Err(TransportError::Closed)
    }
}

/// Per-scan configuration.
#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub source_address: Address128,
    pub hop_limit: u8,
    /// Probes per second; sends never burst beyond one second's worth.
    pub rate_pps: f64,
    pub key: MacKey,
    /// How long to keep receiving after the last probe, in seconds.
    pub receive_grace_s: f64,
}

impl ScanConfig {
    pub fn new(source_address: Address128, rate_pps: f64, key: MacKey) -> Self {
        Self {
            source_address,
            hop_limit: 64,
            rate_pps,
            key,
            receive_grace_s: 5.0,
        }
    }
}

// distance must be present in every row, if only as null
fn required_nullable<'de, D>(d: D) -> Result<Option<u8>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    Option::<u8>::deserialize(d)
}

/// One validated response as recorded in the archive. Duplicates are kept;
/// deduplication is an analysis concern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseRecord {
    pub target: Address128,
    pub responder: Address128,
    #[serde(rename = "type")]
    pub icmp_type: u8,
    #[serde(rename = "code")]
    pub icmp_code: u8,
    #[serde(deserialize_with = "required_nullable")]
    pub distance: Option<u8>,
}

impl From<ParsedResponse> for ResponseRecord {
    fn from(p: ParsedResponse) -> Self {
        Self {
            target: p.target,
            responder: p.responder,
            icmp_type: p.icmp_type,
            icmp_code: p.icmp_code,
            distance: p.distance,
        }
    }
}

/// Run metadata, duplicated into every range directory of the archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanMeta {
    pub source: Address128,
    pub hop_limit: u8,
    pub started: String,
    pub ended: String,
    pub duration_s: f64,
    pub rate_pps: f64,
    pub key_fingerprint: String,
}

/// Everything recorded for one target range.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeResult {
    pub metadata: ScanMeta,
    pub responses: Vec<ResponseRecord>,
}

/// A packet that authenticated but failed parsing, kept for the log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseFailureRecord {
    pub packet_hex: String,
    pub reason: String,
}

/// The full result of a scan run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutcome {
    pub ranges: Vec<RangeResult>,
    pub probes_sent: u64,
    pub bad_mac: u64,
    pub parse_failures: Vec<ParseFailureRecord>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("transport failed after {sent} probes: {source}")]
    Transport {
        source: TransportError,
        sent: u64,
        /// Whatever was collected before the failure.
        partial: Box<ScanOutcome>,
    },
}

struct TokenBucket {
    rate: f64,
    tokens: f64,
    capacity: f64,
    last_micros: u64,
}

impl TokenBucket {
    fn new(rate: f64, now: u64) -> Self {
        assert!(rate > 0.0, "scan rate must be positive");
        Self {
            rate,
            tokens: 0.0,
            capacity: rate.max(1.0),
            last_micros: now,
        }
    }

    fn try_take(&mut self, now: u64) -> bool {
        let dt = now.saturating_sub(self.last_micros) as f64 / 1e6;
        self.last_micros = now;
        self.tokens = (self.tokens + dt * self.rate).min(self.capacity);
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            true
        } else {
            false
        }
    }

    fn micros_until_ready(&self) -> u64 {
        let need = (1.0 - self.tokens).max(0.0);
        ((need / self.rate) * 1e6).ceil().max(1.0) as u64
    }
}

struct Receiver<'a> {
    config: &'a ScanConfig,
    ranges: &'a [TargetRange],
    token_bits: u32,
    collected: Vec<Vec<ResponseRecord>>,
    bad_mac: u64,
    parse_failures: Vec<ParseFailureRecord>,
}

impl<'a> Receiver<'a> {
    fn target_for(&self, token: ProbeToken) -> Option<Address128> {
        let (range_index, address_index) = decode_token(token, self.token_bits);
        let range = self.ranges.get(range_index as usize)?;
        range_target(range, address_index as u64).ok()
    }

    fn drain(&mut self, transport: &mut dyn Transport) -> Result<(), TransportError> {
        for packet in transport.poll_received()? {
            match verify_and_extract(
                &packet,
                &self.config.key,
                self.config.hop_limit,
                self.config.source_address,
                |token| self.target_for(token),
            ) {
                Ok((token, parsed)) => {
                    let (range_index, _) = decode_token(token, self.token_bits);
                    self.collected[range_index as usize].push(parsed.into());
                }
                Err(VerifyError::BadMac) => self.bad_mac += 1,
                Err(VerifyError::Parse(reason)) => self.parse_failures.push(ParseFailureRecord {
                    packet_hex: hex_dump(&packet),
                    reason: reason.to_string(),
                }),
            }
        }
        Ok(())
    }
}

fn finalize(
    receiver: Receiver<'_>,
    sent: u64,
    config: &ScanConfig,
    started_micros: u64,
    clock: &mut dyn Clock,
) -> ScanOutcome {
    let ended_micros = clock.now_micros();
    let meta = ScanMeta {
        source: config.source_address,
        hop_limit: config.hop_limit,
        started: rfc3339_utc_millis(clock.unix_base_micros() + started_micros),
        ended: rfc3339_utc_millis(clock.unix_base_micros() + ended_micros),
        duration_s: (ended_micros - started_micros) as f64 / 1e6,
        rate_pps: config.rate_pps,
        key_fingerprint: config.key.fingerprint(),
    };
    let ranges_out: Vec<RangeResult> = receiver
        .collected
        .into_iter()
        .map(|responses| RangeResult {
            metadata: meta.clone(),
            responses,
        })
        .collect();
    ScanOutcome {
        ranges: ranges_out,
        probes_sent: sent,
        bad_mac: receiver.bad_mac,
        parse_failures: receiver.parse_failures,
    }
}

/// Send one probe per schedule item at the configured rate, validating
/// deliveries concurrently, then keep receiving for the grace period.
pub fn run_scan(
    ranges: &[TargetRange],
    config: &ScanConfig,
    transport: &mut dyn Transport,
    clock: &mut dyn Clock,
) -> Result<ScanOutcome, EngineError> {
    let schedule = make_schedule(ranges)?;
    let token_bits = schedule.token_bits();
    let started_micros = clock.now_micros();

    let mut receiver = Receiver {
        config,
        ranges,
        token_bits,
        collected: vec![Vec::new(); ranges.len()],
        bad_mac: 0,
        parse_failures: Vec::new(),
    };
    let mut bucket = TokenBucket::new(config.rate_pps, started_micros);
    let mut sent = 0u64;

    macro_rules! abort_on_transport_error {
        ($expr:expr) => {
            match $expr {
                Ok(value) => value,
                Err(source) => {
                    let partial = finalize(receiver, sent, config, started_micros, clock);
                    return Err(EngineError::Transport {
                        source,
                        sent,
                        partial: Box::new(partial),
                    });
                }
            }
        };
    }

    for item in schedule {
        // pace: keep draining while waiting for the bucket to grant a probe
        loop {
            let now = clock.now_micros();
            if bucket.try_take(now) {
                break;
            }
            abort_on_transport_error!(receiver.drain(transport));
            clock.advance_to(now + bucket.micros_until_ready());
        }
        let range = &ranges[item.range_index as usize];
        let target =
            range_target(range, item.address_index as u64).expect("schedule emits valid indices");
        let token = encode_token(item.range_index, item.address_index, token_bits)?;
        let probe = build_probe(
            config.source_address,
            target,
            config.hop_limit,
            token,
            &config.key,
        );
        abort_on_transport_error!(transport.send(&probe));
        sent += 1;
        abort_on_transport_error!(receiver.drain(transport));
    }

    // grace window for in-flight replies
    let grace_micros = (config.receive_grace_s * 1e6) as u64;
    let grace_end = clock.now_micros() + grace_micros;
    while clock.now_micros() < grace_end {
        abort_on_transport_error!(receiver.drain(transport));
        let step = (clock.now_micros() + 100_000).min(grace_end);
        clock.advance_to(step);
    }
    abort_on_transport_error!(receiver.drain(transport));

    Ok(finalize(receiver, sent, config, started_micros, clock))
}
