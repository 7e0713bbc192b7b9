//! 128-bit address and prefix arithmetic shared by every other module.
//!
//! An [`Address128`] is one unsigned 128-bit integer whose most significant
//! bit is bit 1 of the address. Printing the value as 32 hex digits reads
//! the same as the exploded text form without colons, so integer compares
//! and shifts agree with CIDR ordering.

use std::fmt;
use std::io::{self, BufRead};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AddrError {
    #[error("malformed address {input:?}: {reason}")]
    MalformedAddress { input: String, reason: &'static str },
    #[error("malformed prefix {input:?}: {reason}")]
    MalformedPrefix { input: String, reason: &'static str },
    #[error("prefix {0} has nonzero bits after the prefix length")]
    NonzeroHostBits(String),
    #[error("empty address set")]
    EmptySet,
    #[error("interface identifier {0:#018x} is not a modified EUI-64")]
    NotEui64(u64),
}

/// Bit mask covering the lowest `bits` bits (0..=128).
pub(crate) const fn low_mask(bits: u32) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

/// An IPv6 address as a 128-bit unsigned integer.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address128(u128);

impl Address128 {
    pub const fn new(value: u128) -> Self {
        Self(value)
    }

    pub const fn value(self) -> u128 {
        self.0
    }

    /// The low 64 bits.
    pub fn iid(self) -> InterfaceIdentifier {
        InterfaceIdentifier::new(self.0 as u64)
    }

    pub fn octets(self) -> [u8; 16] {
        self.0.to_be_bytes()
    }

    pub fn from_octets(octets: [u8; 16]) -> Self {
        Self(u128::from_be_bytes(octets))
    }

    fn groups(self) -> [u16; 8] {
        let mut groups = [0u16; 8];
        for (i, group) in groups.iter_mut().enumerate() {
            *group = (self.0 >> (112 - 16 * i)) as u16;
        }
        groups
    }

    /// `0000:0000:...` form, one hex digit per nibble.
    pub fn exploded(self) -> String {
        let groups = self.groups();
        let mut out = String::with_capacity(39);
        for (i, group) in groups.iter().enumerate() {
            if i > 0 {
                out.push(':');
            }
            out.push_str(&format!("{group:04x}"));
        }
        out
    }

    /// Canonical compressed form: lowercase, leading zeros dropped per
    /// group, the longest all-zero run (leftmost on a tie, length >= 1)
    /// elided as `::`.
    pub fn compressed(self) -> String {
        let groups = self.groups();
        // locate the longest zero run
        let (mut best_start, mut best_len) = (0usize, 0usize);
        let mut i = 0;
        while i < 8 {
            if groups[i] == 0 {
                let start = i;
                while i < 8 && groups[i] == 0 {
                    i += 1;
                }
                if i - start > best_len {
                    best_start = start;
                    best_len = i - start;
                }
            } else {
                i += 1;
            }
        }
        if best_len == 0 {
            return groups.map(|g| format!("{g:x}")).join(":");
        }
        if best_len == 8 {
            return "::".to_string();
        }
        let left = groups[..best_start]
            .iter()
            .map(|g| format!("{g:x}"))
            .collect::<Vec<_>>()
            .join(":");
        let right = groups[best_start + best_len..]
            .iter()
            .map(|g| format!("{g:x}"))
            .collect::<Vec<_>>()
            .join(":");
        format!("{left}::{right}")
    }
}

/// Parse exploded or compressed textual form; `::` elision, no zone index,
/// no embedded IPv4 dotted quads.
pub fn parse_address(text: &str) -> Result<Address128, AddrError> {
    let malformed = |reason: &'static str| AddrError::MalformedAddress {
        input: text.to_string(),
        reason,
    };
    if text.is_empty() {
        return Err(malformed("empty input"));
    }

    fn parse_groups(part: &str, out: &mut Vec<u16>, text: &str) -> Result<(), AddrError> {
        for group in part.split(':') {
            if group.is_empty() || group.len() > 4 {
                return Err(AddrError::MalformedAddress {
                    input: text.to_string(),
                    reason: "group must be 1..=4 hex digits",
                });
            }
            let value =
                u16::from_str_radix(group, 16).map_err(|_| AddrError::MalformedAddress {
                    input: text.to_string(),
                    reason: "invalid hex digit",
                })?;
            out.push(value);
        }
        Ok(())
    }

    let mut head: Vec<u16> = Vec::new();
    let mut tail: Vec<u16> = Vec::new();
    match text.match_indices("::").count() {
        0 => {
            parse_groups(text, &mut head, text)?;
            if head.len() != 8 {
                return Err(malformed("expected 8 groups"));
            }
        }
        1 => {
            let (left, right) = text.split_once("::").expect("checked above");
            if !left.is_empty() {
                parse_groups(left, &mut head, text)?;
            }
            if !right.is_empty() {
                parse_groups(right, &mut tail, text)?;
            }
            if head.len() + tail.len() > 7 {
                return Err(malformed("'::' must elide at least one group"));
            }
        }
        _ => return Err(malformed("multiple '::'")),
    }

    let mut value = 0u128;
    for (i, g) in head.iter().enumerate() {
        value |= (*g as u128) << (112 - 16 * i);
    }
    for (i, g) in tail.iter().rev().enumerate() {
        value |= (*g as u128) << (16 * i);
    }
    Ok(Address128(value))
}

/// Render in one of the two textual forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatMode {
    Exploded,
    Compressed,
}

pub fn format_address(addr: Address128, mode: FormatMode) -> String {
    match mode {
        FormatMode::Exploded => addr.exploded(),
        FormatMode::Compressed => addr.compressed(),
    }
}

impl fmt::Display for Address128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.compressed())
    }
}

impl fmt::Debug for Address128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address128({})", self.compressed())
    }
}

impl FromStr for Address128 {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_address(s)
    }
}

impl Serialize for Address128 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.compressed())
    }
}

impl<'de> Deserialize<'de> for Address128 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_address(&s).map_err(serde::de::Error::custom)
    }
}

/// An address plus a prefix length, with all bits after the length zero.
/// The unit of allocation, hitlists, and responsibility inference.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prefix {
    address: Address128,
    length: u8,
}

impl Prefix {
    /// Strict constructor: bits beyond `length` must already be zero.
    pub fn new(address: Address128, length: u8) -> Result<Self, AddrError> {
        if length > 128 {
            return Err(AddrError::MalformedPrefix {
                input: format!("{address}/{length}"),
                reason: "length exceeds 128",
            });
        }
        if address.value() & low_mask(128 - length as u32) != 0 {
            return Err(AddrError::NonzeroHostBits(format!("{address}/{length}")));
        }
        Ok(Self { address, length })
    }

    /// Lenient constructor: truncates the address to `length` bits.
    pub fn containing(address: Address128, length: u8) -> Self {
        assert!(length <= 128, "prefix length exceeds 128");
        let masked = address.value() & !low_mask(128 - length as u32);
        Self {
            address: Address128::new(masked),
            length,
        }
    }

    pub const fn address(&self) -> Address128 {
        self.address
    }

    pub const fn length(&self) -> u8 {
        self.length
    }

    /// True iff the first `length` bits of `a` equal this prefix.
    pub fn contains(&self, a: Address128) -> bool {
        if self.length == 0 {
            return true;
        }
        (a.value() ^ self.address.value()) & !low_mask(128 - self.length as u32) == 0
    }

    pub fn contains_prefix(&self, other: &Prefix) -> bool {
        other.length >= self.length && self.contains(other.address)
    }

    pub fn first_address(&self) -> Address128 {
        self.address
    }

    pub fn last_address(&self) -> Address128 {
        Address128::new(self.address.value() | low_mask(128 - self.length as u32))
    }

    /// Re-truncate to a shorter (or equal) length.
    pub fn truncate(&self, length: u8) -> Prefix {
        assert!(length <= self.length, "truncate must not extend a prefix");
        Prefix::containing(self.address, length)
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.address, self.length)
    }
}

impl fmt::Debug for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Prefix({self})")
    }
}

/// Parse `<address>/<length>`, strict about host bits.
pub fn parse_prefix(text: &str) -> Result<Prefix, AddrError> {
    let (addr_part, len_part) = text.split_once('/').ok_or(AddrError::MalformedPrefix {
        input: text.to_string(),
        reason: "missing '/'",
    })?;
    let address = parse_address(addr_part)?;
    let length: u8 = len_part.parse().map_err(|_| AddrError::MalformedPrefix {
        input: text.to_string(),
        reason: "invalid length",
    })?;
    Prefix::new(address, length)
}

impl FromStr for Prefix {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_prefix(s)
    }
}

impl Serialize for Prefix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Prefix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_prefix(&s).map_err(serde::de::Error::custom)
    }
}

/// The most specific prefix containing every given address.
pub fn longest_common_prefix<I>(addresses: I) -> Result<Prefix, AddrError>
where
    I: IntoIterator<Item = Address128>,
{
    let mut iter = addresses.into_iter();
    let first = iter.next().ok_or(AddrError::EmptySet)?;
    let mut common = 128u32;
    for a in iter {
        let agree = (a.value() ^ first.value()).leading_zeros();
        common = common.min(agree);
    }
    Ok(Prefix::containing(first, common as u8))
}

/// The low 64 bits of a global unicast address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InterfaceIdentifier(u64);

impl InterfaceIdentifier {
    pub const fn new(value: u64) -> Self {
        Self(value)
    }

    pub const fn value(self) -> u64 {
        self.0
    }

    /// Universal/local bit: 0x02 of the most significant byte.
    pub fn ul_bit(self) -> bool {
        (self.0 >> 56) & 0x02 != 0
    }

    /// Bytes 3..=4 equal 0xFF,0xFE — the modified EUI-64 marker.
    pub fn has_eui64_marker(self) -> bool {
        (self.0 >> 24) & 0xffff == 0xfffe
    }

    /// Top twelve bits all zero — manual or stateful-DHCP style.
    pub fn has_zero_leading12(self) -> bool {
        self.0 >> 52 == 0
    }

    /// Build a modified EUI-64: insert 0xFFFE between the OUI and device
    /// halves of the MAC and invert the u/l bit.
    pub fn from_mac(mac: Eui48) -> Self {
        let m = mac.octets();
        let bytes = [m[0] ^ 0x02, m[1], m[2], 0xff, 0xfe, m[3], m[4], m[5]];
        Self(u64::from_be_bytes(bytes))
    }

    /// Invert [`InterfaceIdentifier::from_mac`]; requires the 0xFFFE marker.
    pub fn to_mac(self) -> Result<Eui48, AddrError> {
        if !self.has_eui64_marker() {
            return Err(AddrError::NotEui64(self.0));
        }
        let b = self.0.to_be_bytes();
        Ok(Eui48::new([b[0] ^ 0x02, b[1], b[2], b[5], b[6], b[7]]))
    }
}

impl fmt::Display for InterfaceIdentifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0.to_be_bytes();
        write!(
            f,
            "{:02x}{:02x}:{:02x}{:02x}:{:02x}{:02x}:{:02x}{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]
        )
    }
}

impl fmt::Debug for InterfaceIdentifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InterfaceIdentifier({self})")
    }
}

/// A 48-bit extended unique identifier (Ethernet MAC address).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Eui48([u8; 6]);

impl Eui48 {
    pub const fn new(octets: [u8; 6]) -> Self {
        Self(octets)
    }

    pub const fn octets(self) -> [u8; 6] {
        self.0
    }

    /// Organizationally unique identifier: the top three octets.
    pub const fn oui(self) -> [u8; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }
}

impl fmt::Display for Eui48 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            self.0[0], self.0[1], self.0[2], self.0[3], self.0[4], self.0[5]
        )
    }
}

impl fmt::Debug for Eui48 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Eui48({self})")
    }
}

impl FromStr for Eui48 {
    type Err = AddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split([':', '-']).collect();
        if parts.len() != 6 {
            return Err(AddrError::MalformedAddress {
                input: s.to_string(),
                reason: "EUI-48 must have 6 octets",
            });
        }
        let mut octets = [0u8; 6];
        for (i, p) in parts.iter().enumerate() {
            octets[i] = u8::from_str_radix(p, 16).map_err(|_| AddrError::MalformedAddress {
                input: s.to_string(),
                reason: "invalid hex octet",
            })?;
        }
        Ok(Self(octets))
    }
}

/// Read a plain-text address list: one address per line, `#` starts a
/// comment, blank lines skipped.
pub fn read_address_list<R: BufRead>(reader: R) -> io::Result<Vec<Address128>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let addr = parse_address(line).map_err(|e| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("line {}: {e}", lineno + 1),
            )
        })?;
        out.push(addr);
    }
    Ok(out)
}

/// Read a hitlist file: one prefix per line in CIDR text, `#` comments.
pub fn read_prefix_list<R: BufRead>(reader: R) -> io::Result<Vec<Prefix>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let prefix = parse_prefix(line).map_err(|e| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("line {}: {e}", lineno + 1),
            )
        })?;
        out.push(prefix);
    }
    Ok(out)
}
