//! Bit-exact construction and parsing of probe and response packets.
//!
//! A probe is a fixed 80-byte IPv6 packet: 40-byte header, 8-byte ICMPv6
//! echo-request header whose identifier and sequence-number fields together
//! carry the 32-bit token, and 32 bytes of data holding HMAC-SHA-256 over
//! the four token bytes. Because an echo reply leaves everything after the
//! type field untouched, and an ICMPv6 error embeds the invoking packet
//! verbatim, the token and MAC always sit in the last 40 bytes of any
//! response — validation needs no per-probe state.

use std::fmt;
use std::fs::File;
use std::io::Read;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::addr::Address128;
use crate::schedule::ProbeToken;

pub const IPV6_HEADER_LEN: usize = 40;
pub const ICMPV6_NEXT_HEADER: u8 = 58;
pub const ECHO_HEADER_LEN: usize = 8;
pub const MAC_LEN: usize = 32;
/// Total wire size of a probe packet.
pub const PROBE_LEN: usize = IPV6_HEADER_LEN + ECHO_HEADER_LEN + MAC_LEN;
/// Token plus MAC, the authenticated tail of every valid response.
pub const TRAILER_LEN: usize = 40;

pub const ECHO_REQUEST: u8 = 128;
pub const ECHO_REPLY: u8 = 129;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("ICMPv6 error type must be 1..=4, got {0}")]
    InvalidErrorType(u8),
    #[error("invoking packet must be at least 48 bytes, got {0}")]
    InvokingTooShort(usize),
    #[error("key must be 64 hex digits: {0}")]
    BadKeyHex(String),
    #[error("embedded hop limit {embedded} exceeds sent hop limit {sent}")]
    NegativeDistance { sent: u8, embedded: u8 },
    #[error("packet is not an 80-byte echo probe")]
    NotAProbe,
}

/// Secret for the per-scan message authentication code. Never serialized;
/// logs and metadata only ever see the fingerprint.
#[derive(Clone, PartialEq, Eq)]
pub struct MacKey([u8; 32]);

impl MacKey {
    pub fn new(secret: [u8; 32]) -> Self {
        Self(secret)
    }

    pub fn from_hex(hex: &str) -> Result<Self, CodecError> {
        let bad = || CodecError::BadKeyHex(hex.to_string());
        if hex.len() != 64 {
            return Err(bad());
        }
        let mut secret = [0u8; 32];
        for (i, byte) in secret.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        Ok(Self(secret))
    }

    /// Fresh key from the OS entropy pool, mixed with the clock as a
    /// fallback on exotic systems.
    pub fn from_entropy() -> Self {
        let mut secret = [0u8; 32];
        let filled = File::open("/dev/urandom")
            .and_then(|mut f| f.read_exact(&mut secret))
            .is_ok();
        if !filled {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(0);
            let mut state = now ^ (std::process::id() as u64).rotate_left(32);
            for chunk in secret.chunks_mut(8) {
                chunk.copy_from_slice(&crate::rng::splitmix64(&mut state).to_be_bytes());
            }
        }
        Self(secret)
    }

    /// First four bytes as hex — enough to match scans to keys in logs.
    pub fn fingerprint(&self) -> String {
        format!(
            "{:02x}{:02x}{:02x}{:02x}",
            self.0[0], self.0[1], self.0[2], self.0[3]
        )
    }

    fn secret(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for MacKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MacKey(fingerprint={})", self.fingerprint())
    }
}

/// HMAC-SHA-256 (RFC 2104 construction over a 64-byte block).
pub fn hmac_sha256(key: &[u8], message: &[u8]) -> [u8; 32] {
    const BLOCK: usize = 64;
    let mut key_block = [0u8; BLOCK];
    if key.len() > BLOCK {
        let digest: [u8; 32] = Sha256::digest(key).into();
        key_block[..32].copy_from_slice(&digest);
    } else {
        key_block[..key.len()].copy_from_slice(key);
    }
    let mut inner = Sha256::new();
    inner.update(key_block.map(|b| b ^ 0x36));
    inner.update(message);
    let inner_hash: [u8; 32] = inner.finalize().into();
    let mut outer = Sha256::new();
    outer.update(key_block.map(|b| b ^ 0x5c));
    outer.update(inner_hash);
    outer.finalize().into()
}

/// MAC carried in a probe's data field: HMAC over the four token bytes.
pub fn probe_mac(key: &MacKey, token: ProbeToken) -> [u8; 32] {
    hmac_sha256(key.secret(), &token.to_be_bytes())
}

/// Ones'-complement checksum over the IPv6 pseudo-header (source,
/// destination, upper-layer length, next-header 58) and the ICMPv6 message.
/// The message's checksum field must be zeroed.
pub fn icmpv6_checksum(src: Address128, dst: Address128, icmp: &[u8]) -> u16 {
    let mut sum: u32 = 0;
    let mut add = |bytes: &[u8]| {
        let mut chunks = bytes.chunks_exact(2);
        for chunk in &mut chunks {
            sum += u16::from_be_bytes([chunk[0], chunk[1]]) as u32;
        }
        if let [last] = chunks.remainder() {
            sum += (*last as u32) << 8;
        }
    };
    add(&src.octets());
    add(&dst.octets());
    add(&(icmp.len() as u32).to_be_bytes());
    add(&[0, 0, 0, ICMPV6_NEXT_HEADER]);
    add(icmp);
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

/// Recompute the checksum with the stored field zeroed and require exact
/// equality with the stored value.
pub fn verify_icmpv6_checksum(src: Address128, dst: Address128, icmp: &[u8]) -> bool {
    if icmp.len() < 4 {
        return false;
    }
    let stored = u16::from_be_bytes([icmp[2], icmp[3]]);
    let mut copy = icmp.to_vec();
    copy[2] = 0;
    copy[3] = 0;
    icmpv6_checksum(src, dst, &copy) == stored
}

fn push_ipv6_header(buf: &mut Vec<u8>, src: Address128, dst: Address128, payload: u16, hops: u8) {
    buf.extend_from_slice(&[0x60, 0, 0, 0]); // version 6, TC 0, flow label 0
    buf.extend_from_slice(&payload.to_be_bytes());
    buf.push(ICMPV6_NEXT_HEADER);
    buf.push(hops);
    buf.extend_from_slice(&src.octets());
    buf.extend_from_slice(&dst.octets());
}

fn finish_checksum(packet: &mut [u8], src: Address128, dst: Address128) {
    let sum = icmpv6_checksum(src, dst, &packet[IPV6_HEADER_LEN..]);
    packet[IPV6_HEADER_LEN + 2..IPV6_HEADER_LEN + 4].copy_from_slice(&sum.to_be_bytes());
}

/// Build the 80-byte echo-request probe for one target.
pub fn build_probe(
    src: Address128,
    dst: Address128,
    hop_limit: u8,
    token: ProbeToken,
    key: &MacKey,
) -> Vec<u8> {
    debug_assert!(hop_limit >= 1);
    let mut packet = Vec::with_capacity(PROBE_LEN);
    push_ipv6_header(
        &mut packet,
        src,
        dst,
        (ECHO_HEADER_LEN + MAC_LEN) as u16,
        hop_limit,
    );
    packet.extend_from_slice(&[ECHO_REQUEST, 0, 0, 0]);
    packet.extend_from_slice(&token.to_be_bytes());
    packet.extend_from_slice(&probe_mac(key, token));
    finish_checksum(&mut packet, src, dst);
    debug_assert_eq!(packet.len(), PROBE_LEN);
    packet
}

/// Build the echo reply a node would send for `probe`: identifier, sequence
/// number and data are echoed back, only the type changes and the checksum
/// is recomputed for the reversed direction. The reply source may differ
/// from the probed address (anycast targets answer from a unicast address).
pub fn echo_reply_for(
    probe: &[u8],
    reply_src: Address128,
    hop_limit: u8,
) -> Result<Vec<u8>, CodecError> {
    if probe.len() != PROBE_LEN || probe[IPV6_HEADER_LEN] != ECHO_REQUEST {
        return Err(CodecError::NotAProbe);
    }
    let reply_dst = Address128::from_octets(probe[8..24].try_into().expect("length checked"));
    let mut packet = Vec::with_capacity(PROBE_LEN);
    push_ipv6_header(
        &mut packet,
        reply_src,
        reply_dst,
        (ECHO_HEADER_LEN + MAC_LEN) as u16,
        hop_limit,
    );
    packet.extend_from_slice(&[ECHO_REPLY, 0, 0, 0]);
    packet.extend_from_slice(&probe[IPV6_HEADER_LEN + 4..]);
    finish_checksum(&mut packet, reply_src, reply_dst);
    Ok(packet)
}

/// Build an ICMPv6 error message (types 1..=4) embedding the invoking
/// packet unmodified.
pub fn build_error_response(
    err_type: u8,
    code: u8,
    fourth_field: u32,
    responder: Address128,
    invoking_packet: &[u8],
    hop_limit: u8,
) -> Result<Vec<u8>, CodecError> {
    if !(1..=4).contains(&err_type) {
        return Err(CodecError::InvalidErrorType(err_type));
    }
    if invoking_packet.len() < 48 {
        return Err(CodecError::InvokingTooShort(invoking_packet.len()));
    }
    // errors go back to the invoking packet's source
    let dst = Address128::from_octets(invoking_packet[8..24].try_into().expect("length checked"));
    let payload = ECHO_HEADER_LEN + invoking_packet.len();
    let mut packet = Vec::with_capacity(IPV6_HEADER_LEN + payload);
    push_ipv6_header(&mut packet, responder, dst, payload as u16, hop_limit);
    packet.extend_from_slice(&[err_type, code]);
    packet.extend_from_slice(&[0, 0]); // checksum placeholder
    packet.extend_from_slice(&fourth_field.to_be_bytes());
    packet.extend_from_slice(invoking_packet);
    finish_checksum(&mut packet, responder, dst);
    Ok(packet)
}

/// Hop count estimate: sent hop limit minus the hop limit found in the
/// embedded probe. Off by one on routers that embed the packet as received
/// rather than as it would have been forwarded.
pub fn estimate_distance(sent_hop_limit: u8, embedded_hop_limit: u8) -> Result<u8, CodecError> {
    if embedded_hop_limit > sent_hop_limit {
        return Err(CodecError::NegativeDistance {
            sent: sent_hop_limit,
            embedded: embedded_hop_limit,
        });
    }
    Ok(sent_hop_limit - embedded_hop_limit)
}

/// One successfully validated and parsed response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedResponse {
    /// The address the probe was sent to, recovered from the token.
    pub target: Address128,
    /// Source address of the response packet.
    pub responder: Address128,
    pub icmp_type: u8,
    pub icmp_code: u8,
    /// Present for error responses only.
    pub distance: Option<u8>,
}

/// Why a MAC-valid packet was still rejected. Each check failure is its own
/// reason so oddities (prefix translation, spoofed embeds) stay visible in
/// the logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseFailure {
    TooShort {
        len: usize,
    },
    OuterNotIpv6 {
        version: u8,
    },
    NotIcmpv6 {
        next_header: u8,
    },
    BadChecksum,
    UnexpectedType {
        icmp_type: u8,
        icmp_code: u8,
    },
    UnknownToken {
        token: u32,
    },
    TruncatedEmbed {
        len: usize,
    },
    EmbeddedNotIpv6 {
        version: u8,
    },
    EmbeddedTooShort {
        payload_length: u16,
    },
    EmbeddedNextHeader {
        next_header: u8,
    },
    EmbeddedSourceMismatch {
        found: Address128,
    },
    EmbeddedDestMismatch {
        found: Address128,
        expected: Address128,
    },
    EmbeddedNotEchoRequest {
        icmp_type: u8,
        icmp_code: u8,
    },
    NegativeDistance {
        sent: u8,
        embedded: u8,
    },
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooShort { len } => write!(f, "packet too short ({len} bytes)"),
            Self::OuterNotIpv6 { version } => write!(f, "outer version {version} is not 6"),
            Self::NotIcmpv6 { next_header } => {
                write!(f, "outer next header {next_header} is not ICMPv6")
            }
            Self::BadChecksum => write!(f, "outer ICMPv6 checksum mismatch"),
            Self::UnexpectedType {
                icmp_type,
                icmp_code,
            } => {
                write!(f, "unexpected ICMPv6 type {icmp_type} code {icmp_code}")
            }
            Self::UnknownToken { token } => write!(f, "token {token:#010x} maps to no target"),
            Self::TruncatedEmbed { len } => {
                write!(
                    f,
                    "error message too short for an embedded probe ({len} bytes)"
                )
            }
            Self::EmbeddedNotIpv6 { version } => {
                write!(f, "embedded version {version} is not 6")
            }
            Self::EmbeddedTooShort { payload_length } => {
                write!(f, "embedded payload length {payload_length} below 40")
            }
            Self::EmbeddedNextHeader { next_header } => {
                write!(f, "embedded next header {next_header} is not ICMPv6")
            }
            Self::EmbeddedSourceMismatch { found } => {
                write!(f, "embedded source {found} is not the scan source")
            }
            Self::EmbeddedDestMismatch { found, expected } => {
                write!(
                    f,
                    "embedded destination {found} is not the target {expected}"
                )
            }
            Self::EmbeddedNotEchoRequest {
                icmp_type,
                icmp_code,
            } => {
                write!(
                    f,
                    "embedded ICMPv6 {icmp_type}/{icmp_code} is not an echo request"
                )
            }
            Self::NegativeDistance { sent, embedded } => {
                write!(f, "embedded hop limit {embedded} above sent {sent}")
            }
        }
    }
}

/// Validation outcome for an incoming packet that was not accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyError {
    /// No authenticated trailer: silently discarded (only counted).
    BadMac,
    /// Authenticated but malformed or inconsistent: logged with the packet.
    Parse(ParseFailure),
}

/// Validate and parse one captured packet.
///
/// The last 40 bytes are assumed to hold the token and MAC; packets whose
/// MAC does not verify are discarded before any parsing. An echo reply
/// (129/0) records the responder and is done. Error types 1..=4 must embed
/// an intact probe: version 6, payload length at least 40, next header 58,
/// source equal to the scan source, destination equal to the target the
/// token maps to, inner type 128 code 0. The embedded hop limit yields the
/// distance estimate. The embedded checksum is ignored; the outer checksum
/// must verify exactly.
pub fn verify_and_extract<F>(
    packet: &[u8],
    key: &MacKey,
    sent_hop_limit: u8,
    scan_src: Address128,
    expected_target: F,
) -> Result<(ProbeToken, ParsedResponse), VerifyError>
where
    F: Fn(ProbeToken) -> Option<Address128>,
{
    // MAC first: anything under 40 bytes cannot authenticate at all
    if packet.len() < TRAILER_LEN {
        return Err(VerifyError::BadMac);
    }
    let trailer = &packet[packet.len() - TRAILER_LEN..];
    let token = ProbeToken::from_be_bytes(trailer[4..8].try_into().expect("length checked"));
    if hmac_sha256(key.secret(), &trailer[4..8]) != trailer[8..40] {
        return Err(VerifyError::BadMac);
    }

    let fail = |f: ParseFailure| Err(VerifyError::Parse(f));
    if packet.len() < IPV6_HEADER_LEN + ECHO_HEADER_LEN {
        return fail(ParseFailure::TooShort { len: packet.len() });
    }
    let version = packet[0] >> 4;
    if version != 6 {
        return fail(ParseFailure::OuterNotIpv6 { version });
    }
    if packet[6] != ICMPV6_NEXT_HEADER {
        return fail(ParseFailure::NotIcmpv6 {
            next_header: packet[6],
        });
    }
    let responder = Address128::from_octets(packet[8..24].try_into().expect("length checked"));
    let outer_dst = Address128::from_octets(packet[24..40].try_into().expect("length checked"));
    if !verify_icmpv6_checksum(responder, outer_dst, &packet[IPV6_HEADER_LEN..]) {
        return fail(ParseFailure::BadChecksum);
    }
    let icmp_type = packet[40];
    let icmp_code = packet[41];

    if icmp_type == ECHO_REPLY && icmp_code == 0 {
        let target =
            expected_target(token).ok_or(VerifyError::Parse(ParseFailure::UnknownToken {
                token: token.0,
            }))?;
        return Ok((
            token,
            ParsedResponse {
                target,
                responder,
                icmp_type,
                icmp_code,
                distance: None,
            },
        ));
    }
    if !(1..=4).contains(&icmp_type) {
        return fail(ParseFailure::UnexpectedType {
            icmp_type,
            icmp_code,
        });
    }

    // embedded probe starts after the 8-byte error header
    let embed = IPV6_HEADER_LEN + ECHO_HEADER_LEN;
    if packet.len() < embed + IPV6_HEADER_LEN + ECHO_HEADER_LEN {
        return fail(ParseFailure::TruncatedEmbed { len: packet.len() });
    }
    let eversion = packet[embed] >> 4;
    if eversion != 6 {
        return fail(ParseFailure::EmbeddedNotIpv6 { version: eversion });
    }
    let epayload = u16::from_be_bytes([packet[embed + 4], packet[embed + 5]]);
    if epayload < 40 {
        return fail(ParseFailure::EmbeddedTooShort {
            payload_length: epayload,
        });
    }
    if packet[embed + 6] != ICMPV6_NEXT_HEADER {
        return fail(ParseFailure::EmbeddedNextHeader {
            next_header: packet[embed + 6],
        });
    }
    let embedded_hops = packet[embed + 7];
    let esrc = Address128::from_octets(
        packet[embed + 8..embed + 24]
            .try_into()
            .expect("length checked"),
    );
    if esrc != scan_src {
        return fail(ParseFailure::EmbeddedSourceMismatch { found: esrc });
    }
    let edst = Address128::from_octets(
        packet[embed + 24..embed + 40]
            .try_into()
            .expect("length checked"),
    );
    let target = expected_target(token).ok_or(VerifyError::Parse(ParseFailure::UnknownToken {
        token: token.0,
    }))?;
    if edst != target {
        return fail(ParseFailure::EmbeddedDestMismatch {
            found: edst,
            expected: target,
        });
    }
    let etype = packet[embed + 40];
    let ecode = packet[embed + 41];
    if etype != ECHO_REQUEST || ecode != 0 {
        return fail(ParseFailure::EmbeddedNotEchoRequest {
            icmp_type: etype,
            icmp_code: ecode,
        });
    }
    let distance = estimate_distance(sent_hop_limit, embedded_hops).map_err(|_| {
        VerifyError::Parse(ParseFailure::NegativeDistance {
            sent: sent_hop_limit,
            embedded: embedded_hops,
        })
    })?;
    Ok((
        token,
        ParsedResponse {
            target,
            responder,
            icmp_type,
            icmp_code,
            distance: Some(distance),
        },
    ))
}

/// Render a packet as lowercase hex for failure logs.
pub fn hex_dump(packet: &[u8]) -> String {
    let mut out = String::with_capacity(packet.len() * 2);
    for b in packet {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
