//! Hitlist aggregation, interface-identifier classification and vendor
//! attribution, probe-target sampling, prefix-of-responsibility inference,
//! and scan statistics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use serde::Serialize;
use thiserror::Error;

use crate::addr::{
    longest_common_prefix, AddrError, Address128, Eui48, InterfaceIdentifier, Prefix,
};
use crate::engine::{RangeResult, ResponseRecord};
use crate::rng::DetRng;
use crate::schedule::{ScheduleError, TargetRange};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("hitlist has {have} entries, need {need}")]
    HitlistTooSmall { have: usize, need: usize },
    #[error("prefix lengths must satisfy hitlist {hitlist} <= deeper {deeper} <= resolution {resolution} <= 64")]
    BadSampleLengths {
        hitlist: u8,
        deeper: u8,
        resolution: u8,
    },
    #[error(transparent)]
    Addr(#[from] AddrError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("oui table: {0}")]
    OuiTable(String),
}

/// Sorted unique prefixes of one length: the publishable form of collected
/// addresses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hitlist {
    plen: u8,
    prefixes: Vec<Prefix>,
}

impl Hitlist {
    pub fn plen(&self) -> u8 {
        self.plen
    }

    pub fn prefixes(&self) -> &[Prefix] {
        &self.prefixes
    }

    pub fn len(&self) -> usize {
        self.prefixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prefixes.is_empty()
    }

    /// Build from prefixes already at the right length (a hitlist file).
    pub fn from_prefixes(plen: u8, prefixes: impl IntoIterator<Item = Prefix>) -> Self {
        let mut list: Vec<Prefix> = prefixes
            .into_iter()
            .map(|p| p.truncate(plen.min(p.length())))
            .collect();
        list.sort_unstable();
        list.dedup();
        Self {
            plen,
            prefixes: list,
        }
    }
}

/// Truncate every address to `plen` bits and keep the sorted unique set.
pub fn aggregate_hitlist(addresses: impl IntoIterator<Item = Address128>, plen: u8) -> Hitlist {
    let mut prefixes: Vec<Prefix> = addresses
        .into_iter()
        .map(|a| Prefix::containing(a, plen))
        .collect();
    prefixes.sort_unstable();
    prefixes.dedup();
    Hitlist { plen, prefixes }
}

/// Interface-identifier census: observable feature counts plus the derived
/// per-generation-method estimate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IidBreakdown {
    /// Unique interface identifiers seen.
    pub total: u64,
    /// 0xFFFE in the middle bytes: modified EUI-64.
    pub eui64: u64,
    /// Top twelve bits zero: manual or stateful-DHCP assignment.
    pub leading_zero12: u64,
    /// u/l bit set among the high-entropy remainder.
    pub ul_set_remainder: u64,
    pub estimates: IidEstimates,
    /// True when the privacy estimate was clamped at zero because more than
    /// half of the remainder had the u/l bit set.
    pub privacy_clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IidEstimates {
    pub manual_dhcp: u64,
    pub modified_eui64: u64,
    /// Twice the u/l-set count: the bit is set in half of semantically
    /// opaque identifiers and never by privacy extensions.
    pub semantically_opaque: u64,
    pub privacy_extensions: u64,
}

/// Classify the unique interface identifiers of an address collection.
pub fn classify_iids(addresses: impl IntoIterator<Item = Address128>) -> IidBreakdown {
    let unique: HashSet<u64> = addresses.into_iter().map(|a| a.iid().value()).collect();
    let total = unique.len() as u64;
    let mut eui64 = 0u64;
    let mut leading_zero12 = 0u64;
    let mut ul_set_remainder = 0u64;
    for &value in &unique {
        let iid = InterfaceIdentifier::new(value);
        if iid.has_eui64_marker() {
            eui64 += 1;
        } else if iid.has_zero_leading12() {
            leading_zero12 += 1;
        } else if iid.ul_bit() {
            ul_set_remainder += 1;
        }
    }
    let remainder = total - eui64 - leading_zero12;
    let semantically_opaque = 2 * ul_set_remainder;
    let (privacy_extensions, privacy_clamped) = if semantically_opaque > remainder {
        (0, true)
    } else {
        (remainder - semantically_opaque, false)
    };
    IidBreakdown {
        total,
        eui64,
        leading_zero12,
        ul_set_remainder,
        estimates: IidEstimates {
            manual_dhcp: leading_zero12,
            modified_eui64: eui64,
            semantically_opaque,
            privacy_extensions,
        },
        privacy_clamped,
    }
}

/// Recover the MAC address from a modified EUI-64 interface identifier.
pub fn extract_eui48(iid: InterfaceIdentifier) -> Result<Eui48, AnalysisError> {
    Ok(iid.to_mac()?)
}

pub const UNREGISTERED_VENDOR: &str = "(unregistered EUI-48)";

/// Vendor lookup table keyed by OUI, loaded from `OUI<tab>Name` rows.
#[derive(Debug, Clone)]
pub struct OuiTable {
    vendors: HashMap<[u8; 3], String>,
}

impl OuiTable {
    /// Parse `xx:xx:xx<TAB>Vendor Name` rows; `#` comments and blank lines
    /// are skipped; on duplicate OUIs the first row wins.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, AnalysisError> {
        let mut vendors = HashMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| AnalysisError::OuiTable(e.to_string()))?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (oui_text, name) = line.split_once('\t').ok_or_else(|| {
                AnalysisError::OuiTable(format!("line {}: expected OUI<TAB>Name", lineno + 1))
            })?;
            let mut oui = [0u8; 3];
            let parts: Vec<&str> = oui_text.split([':', '-']).collect();
            if parts.len() != 3 {
                return Err(AnalysisError::OuiTable(format!(
                    "line {}: OUI must have 3 octets",
                    lineno + 1
                )));
            }
            for (i, p) in parts.iter().enumerate() {
                oui[i] = u8::from_str_radix(p, 16).map_err(|_| {
                    AnalysisError::OuiTable(format!("line {}: bad OUI octet", lineno + 1))
                })?;
            }
            vendors
                .entry(oui)
                .or_insert_with(|| name.trim().to_string());
        }
        Ok(Self { vendors })
    }

    pub fn len(&self) -> usize {
        self.vendors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vendors.is_empty()
    }
}

/// Vendor name for a MAC, or the unregistered marker.
pub fn lookup_vendor(mac: Eui48, table: &OuiTable) -> &str {
    table
        .vendors
        .get(&mac.oui())
        .map(String::as_str)
        .unwrap_or(UNREGISTERED_VENDOR)
}

/// Per-value counts of one interface-identifier byte. With `split_by_ul`
/// the counts are split into u/l-clear and u/l-set series.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByteHistogram {
    pub byte_index: u8,
    /// One series, or two when split: `[ul_clear, ul_set]`.
    pub series: Vec<[u64; 256]>,
}

pub fn iid_byte_histogram(
    iids: impl IntoIterator<Item = InterfaceIdentifier>,
    byte_index: u8,
    split_by_ul: bool,
) -> ByteHistogram {
    assert!(byte_index < 8, "interface identifiers have 8 bytes");
    let mut series = vec![[0u64; 256]; if split_by_ul { 2 } else { 1 }];
    for iid in iids {
        let byte = iid.value().to_be_bytes()[byte_index as usize];
        let bucket = if split_by_ul && iid.ul_bit() { 1 } else { 0 };
        series[bucket][byte as usize] += 1;
    }
    ByteHistogram { byte_index, series }
}

/// Draw `n_prefixes` distinct hitlist entries, pick one random sub-prefix of
/// `deeper_len` inside each, and emit it as a range probing one address per
/// `resolution_len` sub-prefix with an all-zero tail.
pub fn sample_probe_targets(
    hitlist: &Hitlist,
    n_prefixes: usize,
    deeper_len: u8,
    resolution_len: u8,
    seed: u64,
) -> Result<Vec<TargetRange>, AnalysisError> {
    if hitlist.plen() > deeper_len || deeper_len > resolution_len || resolution_len > 64 {
        return Err(AnalysisError::BadSampleLengths {
            hitlist: hitlist.plen(),
            deeper: deeper_len,
            resolution: resolution_len,
        });
    }
    if hitlist.len() < n_prefixes {
        return Err(AnalysisError::HitlistTooSmall {
            have: hitlist.len(),
            need: n_prefixes,
        });
    }
    let mut rng = DetRng::new(seed);
    let picks = rng.sample_indices(hitlist.len(), n_prefixes);
    let mut ranges = Vec::with_capacity(n_prefixes);
    for index in picks {
        let entry = hitlist.prefixes()[index];
        let extra_bits = (deeper_len - entry.length()) as u32;
        let sub = if extra_bits == 0 {
            0u128
        } else {
            rng.next_u64() as u128 & ((1u128 << extra_bits.min(64)) - 1)
        };
        let addr = entry.address().value() | (sub << (128 - deeper_len as u32));
        let deeper = Prefix::containing(Address128::new(addr), deeper_len);
        ranges.push(TargetRange::anycast_sweep(deeper, resolution_len)?);
    }
    Ok(ranges)
}

/// Prefix-of-responsibility inference over the responses to one probed
/// prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrResult {
    /// Most specific prefix covering all targets each responder answered
    /// for, clamped to /64 at most.
    pub responsibilities: BTreeMap<Address128, Prefix>,
    /// Responders whose responsibility spans the whole prefix under test:
    /// the aggregation routers, not customers.
    pub discarded: HashSet<Address128>,
    /// Count per responsibility length, discarded responders excluded.
    pub histogram: BTreeMap<u8, u64>,
}

impl PrResult {
    /// The most common responsibility length, ties broken toward shorter.
    pub fn mode(&self) -> Option<u8> {
        self.histogram
            .iter()
            .max_by_key(|&(len, count)| (*count, std::cmp::Reverse(*len)))
            .map(|(len, _)| *len)
    }
}

/// Group responses by responder and compute each responder's prefix of
/// responsibility. A single response yields the target's /64 — no access
/// provider routes anything longer to a customer. Responders covering the
/// entire prefix under test are set aside as infrastructure.
pub fn compute_pr(responses: &[ResponseRecord], prefix_under_test: Prefix) -> PrResult {
    let mut by_responder: BTreeMap<Address128, Vec<Address128>> = BTreeMap::new();
    for r in responses {
        by_responder.entry(r.responder).or_default().push(r.target);
    }
    let mut responsibilities = BTreeMap::new();
    let mut discarded = HashSet::new();
    let mut histogram: BTreeMap<u8, u64> = BTreeMap::new();
    for (responder, targets) in by_responder {
        let pr = if targets.len() == 1 {
            Prefix::containing(targets[0], 64)
        } else {
            let lcp = longest_common_prefix(targets.iter().copied())
                .expect("responder groups are nonempty");
            lcp.truncate(lcp.length().min(64))
        };
        if pr == prefix_under_test {
            discarded.insert(responder);
        } else {
            *histogram.entry(pr.length()).or_default() += 1;
        }
        responsibilities.insert(responder, pr);
    }
    PrResult {
        responsibilities,
        discarded,
        histogram,
    }
}

/// Headline scan counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScanStats {
    pub probes_sent: u64,
    pub responses: u64,
    pub unique_responders: u64,
    pub responders_with_eui64: u64,
}

/// Tally a scan: sent probes come from the target list (one per address in
/// each range), everything else from the recorded responses.
pub fn scan_stats(targets: &[TargetRange], results: &[RangeResult]) -> ScanStats {
    let probes_sent = targets.iter().map(|r| r.size() as u64).sum();
    let mut responses = 0u64;
    let mut responders: HashSet<Address128> = HashSet::new();
    for range in results {
        responses += range.responses.len() as u64;
        responders.extend(range.responses.iter().map(|r| r.responder));
    }
    let responders_with_eui64 = responders
        .iter()
        .filter(|a| a.iid().has_eui64_marker())
        .count() as u64;
    ScanStats {
        probes_sent,
        responses,
        unique_responders: responders.len() as u64,
        responders_with_eui64,
    }
}
