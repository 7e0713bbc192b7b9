//! Target ranges, reverse IP-sequential enumeration, range interleaving,
//! and 32-bit probe tokens.
//!
//! A range is the set of addresses sharing a fixed prefix and a fixed
//! suffix; the bits in between are free. Enumeration walks a sequential
//! counter but bit-reverses it before embedding, which spreads consecutive
//! probes across the whole range instead of hammering one router. Multiple
//! ranges are interleaved so each progresses proportionally over the whole
//! runtime.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::{low_mask, Address128, Prefix};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("value {value:#x} does not fit in {width} bits")]
    ValueOutOfWidth { value: u64, width: u32 },
    #[error("index {index} out of range for {size} addresses")]
    IndexOutOfRange { index: u64, size: u128 },
    #[error("suffix value does not fit in {0} bits")]
    InvalidSuffix(u32),
    #[error("suffix length {suffix} plus prefix length {prefix} exceeds 128")]
    SuffixTooLong { prefix: u8, suffix: u32 },
    #[error(
        "range {index} needs {free} address-index bits but only {available} remain \
         beside the range index for {ranges} ranges"
    )]
    TokenOverflow {
        index: usize,
        free: u32,
        available: u32,
        ranges: usize,
    },
    #[error("a schedule needs at least one range")]
    NoRanges,
    #[error("target spec field {0:?} is inconsistent")]
    BadTargetSpec(String),
}

/// Fixed prefix bits plus fixed suffix bits with free middle bits; the unit
/// of scanning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetRange {
    prefix: Prefix,
    suffix_value: u128,
    suffix_len: u32,
}

impl TargetRange {
    pub fn new(prefix: Prefix, suffix_value: u128, suffix_len: u32) -> Result<Self, ScheduleError> {
        if suffix_len > 128 - prefix.length() as u32 {
            return Err(ScheduleError::SuffixTooLong {
                prefix: prefix.length(),
                suffix: suffix_len,
            });
        }
        if suffix_value & !low_mask(suffix_len) != 0 {
            return Err(ScheduleError::InvalidSuffix(suffix_len));
        }
        Ok(Self {
            prefix,
            suffix_value,
            suffix_len,
        })
    }

    /// One address per sub-prefix of `resolution` length, each with an
    /// all-zero tail. At `resolution` 64 that is the subnet-router anycast
    /// address of every /64 in the prefix.
    pub fn anycast_sweep(prefix: Prefix, resolution: u8) -> Result<Self, ScheduleError> {
        if resolution < prefix.length() {
            return Err(ScheduleError::SuffixTooLong {
                prefix: prefix.length(),
                suffix: 128 - resolution as u32,
            });
        }
        Self::new(prefix, 0, 128 - resolution as u32)
    }

    pub fn prefix(&self) -> Prefix {
        self.prefix
    }

    pub fn suffix_value(&self) -> u128 {
        self.suffix_value
    }

    pub fn suffix_len(&self) -> u32 {
        self.suffix_len
    }

    pub fn free_width(&self) -> u32 {
        128 - self.prefix.length() as u32 - self.suffix_len
    }

    /// Number of addresses in the range: 2^free_width.
    pub fn size(&self) -> u128 {
        1u128 << self.free_width()
    }

    pub fn contains(&self, a: Address128) -> bool {
        self.prefix.contains(a) && a.value() & low_mask(self.suffix_len) == self.suffix_value
    }
}

/// Mirror bit `i` to bit `width-1-i`. Widths up to 64 are supported.
pub fn reverse_bits(value: u64, width: u32) -> Result<u64, ScheduleError> {
    if width > 64 || (width < 64 && value >> width != 0) {
        return Err(ScheduleError::ValueOutOfWidth { value, width });
    }
    if width == 0 {
        return Ok(0);
    }
    Ok(value.reverse_bits() >> (64 - width))
}

/// The `index`-th address of a range in reverse IP-sequential order: prefix
/// bits, then the bit-reversed counter, then the suffix bits.
pub fn range_target(range: &TargetRange, index: u64) -> Result<Address128, ScheduleError> {
    let width = range.free_width();
    if width < 64 && index >> width != 0 {
        return Err(ScheduleError::IndexOutOfRange {
            index,
            size: range.size(),
        });
    }
    let reversed = reverse_bits(index, width)? as u128;
    let value =
        range.prefix.address().value() | (reversed << range.suffix_len) | range.suffix_value;
    Ok(Address128::new(value))
}

/// A 32-bit scan token: the top `n` bits are the range index, the remaining
/// bits the address index within the range. `n` is fixed per scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProbeToken(pub u32);

impl ProbeToken {
    pub fn to_be_bytes(self) -> [u8; 4] {
        self.0.to_be_bytes()
    }

    pub fn from_be_bytes(bytes: [u8; 4]) -> Self {
        Self(u32::from_be_bytes(bytes))
    }
}

/// Token bits needed to index `ranges` ranges (0 for a single range).
pub fn range_index_bits(ranges: usize) -> u32 {
    if ranges <= 1 {
        0
    } else {
        (ranges - 1).ilog2() + 1
    }
}

pub fn encode_token(
    range_index: u32,
    address_index: u32,
    n: u32,
) -> Result<ProbeToken, ScheduleError> {
    let overflow = || ScheduleError::TokenOverflow {
        index: range_index as usize,
        free: 32 - n.min(32),
        available: 32 - n.min(32),
        ranges: 1usize << n.min(32),
    };
    if n > 32 {
        return Err(overflow());
    }
    if n == 0 {
        if range_index != 0 {
            return Err(overflow());
        }
        return Ok(ProbeToken(address_index));
    }
    if n < 32 && range_index >> n != 0 {
        return Err(overflow());
    }
    if address_index >> (32 - n) != 0 {
        return Err(overflow());
    }
    Ok(ProbeToken((range_index << (32 - n)) | address_index))
}

pub fn decode_token(token: ProbeToken, n: u32) -> (u32, u32) {
    if n == 0 {
        (0, token.0)
    } else {
        (token.0 >> (32 - n), token.0 & (u32::MAX >> n))
    }
}

/// One step of a scan: which range, and the sequential (pre-bit-reversal)
/// counter within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleItem {
    pub range_index: u32,
    pub address_index: u32,
}

/// Deterministic largest-deficit interleaver. Step `k` goes to the range
/// most behind its proportional target `k*Ni/N`, so after any `k` emitted
/// items every range has progressed by its share of `k` within one item.
#[derive(Debug)]
pub struct Schedule {
    // (emitted, size) per range
    progress: Vec<(u64, u64)>,
    total: u128,
    emitted: u128,
    token_bits: u32,
}

impl Schedule {
    pub fn new(ranges: &[TargetRange]) -> Result<Self, ScheduleError> {
        if ranges.is_empty() {
            return Err(ScheduleError::NoRanges);
        }
        let n = range_index_bits(ranges.len());
        for (i, r) in ranges.iter().enumerate() {
            if r.free_width() > 32 - n {
                return Err(ScheduleError::TokenOverflow {
                    index: i,
                    free: r.free_width(),
                    available: 32 - n,
                    ranges: ranges.len(),
                });
            }
        }
        let progress: Vec<(u64, u64)> = ranges.iter().map(|r| (0, r.size() as u64)).collect();
        let total = progress.iter().map(|&(_, s)| s as u128).sum();
        Ok(Self {
            progress,
            total,
            emitted: 0,
            token_bits: n,
        })
    }

    /// Bits reserved for the range index in each token.
    pub fn token_bits(&self) -> u32 {
        self.token_bits
    }

    pub fn total(&self) -> u128 {
        self.total
    }
}

impl Iterator for Schedule {
    type Item = ScheduleItem;

    fn next(&mut self) -> Option<ScheduleItem> {
        if self.emitted == self.total {
            return None;
        }
        // maximize k*Ni - sent_i*N (the deficit against the proportional
        // target, scaled by N); ties go to the lowest range index
        let k = self.emitted + 1;
        let n = self.total;
        let mut best: Option<(usize, i128)> = None;
        for (i, &(sent, size)) in self.progress.iter().enumerate() {
            if sent == size {
                continue;
            }
            let deficit = (k * size as u128) as i128 - (sent as u128 * n) as i128;
            match best {
                Some((_, d)) if d >= deficit => {}
                _ => best = Some((i, deficit)),
            }
        }
        let (idx, _) = best.expect("emitted < total implies an unfinished range");
        let item = ScheduleItem {
            range_index: idx as u32,
            address_index: self.progress[idx].0 as u32,
        };
        self.progress[idx].0 += 1;
        self.emitted += 1;
        Some(item)
    }
}

/// Build the interleaved schedule for a target list.
pub fn make_schedule(ranges: &[TargetRange]) -> Result<Schedule, ScheduleError> {
    Schedule::new(ranges)
}

/// Serialized form of one range in a target-list file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub prefix: String,
    /// Suffix bits as hex, `ceil(suffix_len/4)` digits, value right-aligned.
    pub suffix: String,
    pub suffix_len: u32,
}

impl TargetSpec {
    pub fn from_range(range: &TargetRange) -> Self {
        let digits = (range.suffix_len as usize).div_ceil(4);
        Self {
            prefix: range.prefix.to_string(),
            suffix: if digits == 0 {
                String::new()
            } else {
                format!("{:0width$x}", range.suffix_value, width = digits)
            },
            suffix_len: range.suffix_len,
        }
    }

    pub fn to_range(&self) -> Result<TargetRange, ScheduleError> {
        let prefix: Prefix = self
            .prefix
            .parse()
            .map_err(|_| ScheduleError::BadTargetSpec(self.prefix.clone()))?;
        let digits = (self.suffix_len as usize).div_ceil(4);
        if self.suffix.len() != digits {
            return Err(ScheduleError::BadTargetSpec(self.suffix.clone()));
        }
        let value = if digits == 0 {
            0
        } else {
            u128::from_str_radix(&self.suffix, 16)
                .map_err(|_| ScheduleError::BadTargetSpec(self.suffix.clone()))?
        };
        TargetRange::new(prefix, value, self.suffix_len)
    }
}

/// Parse a target-list file (a JSON array of [`TargetSpec`]).
pub fn parse_target_list(json: &str) -> Result<Vec<TargetRange>, String> {
    let specs: Vec<TargetSpec> = serde_json::from_str(json).map_err(|e| e.to_string())?;
    specs
        .iter()
        .map(|s| s.to_range().map_err(|e| e.to_string()))
        .collect()
}

/// Serialize ranges to the target-list file format.
pub fn targets_to_json(ranges: &[TargetRange]) -> String {
    let specs: Vec<TargetSpec> = ranges.iter().map(TargetSpec::from_range).collect();
    serde_json::to_string_pretty(&specs).expect("target specs always serialize")
}
