//! The scan result archive: a ZIP file of JSON members.
//!
//! Layout: `targets.json` holds the target list exactly as supplied, then
//! one directory per range, named after the range's index in the list, each
//! with `metadata.json` and `responses.json`. Members are stored (method 0)
//! with fixed timestamps so identical results produce identical bytes.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::engine::{RangeResult, ResponseRecord, ScanMeta};

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json in {member}: {error}")]
    Json { member: String, error: String },
    #[error("not a zip archive: {0}")]
    NotZip(String),
    #[error("member {member} failed CRC check")]
    Crc { member: String },
    #[error("unexpected member layout: {0}")]
    Layout(String),
}

// --- minimal stored-only ZIP ---

// fixed DOS timestamp: 2020-01-01 00:00:00
const DOS_TIME: u16 = 0;
const DOS_DATE: u16 = ((2020 - 1980) << 9) | (1 << 5) | 1;

fn build_zip(members: &[(String, Vec<u8>)]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut central = Vec::new();
    for (name, data) in members {
        let offset = out.len() as u32;
        let crc = crc32fast::hash(data);
        let name_bytes = name.as_bytes();
        // local file header
        out.extend_from_slice(&0x04034b50u32.to_le_bytes());
        out.extend_from_slice(&20u16.to_le_bytes()); // version needed
        out.extend_from_slice(&0u16.to_le_bytes()); // flags
        out.extend_from_slice(&0u16.to_le_bytes()); // method: stored
        out.extend_from_slice(&DOS_TIME.to_le_bytes());
        out.extend_from_slice(&DOS_DATE.to_le_bytes());
        out.extend_from_slice(&crc.to_le_bytes());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes()); // extra length
        out.extend_from_slice(name_bytes);
        out.extend_from_slice(data);
        // central directory entry
        central.extend_from_slice(&0x02014b50u32.to_le_bytes());
        central.extend_from_slice(&20u16.to_le_bytes()); // version made by
        central.extend_from_slice(&20u16.to_le_bytes()); // version needed
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes());
        central.extend_from_slice(&DOS_TIME.to_le_bytes());
        central.extend_from_slice(&DOS_DATE.to_le_bytes());
        central.extend_from_slice(&crc.to_le_bytes());
        central.extend_from_slice(&(data.len() as u32).to_le_bytes());
        central.extend_from_slice(&(data.len() as u32).to_le_bytes());
        central.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        central.extend_from_slice(&0u16.to_le_bytes()); // extra
        central.extend_from_slice(&0u16.to_le_bytes()); // comment
        central.extend_from_slice(&0u16.to_le_bytes()); // disk
        central.extend_from_slice(&0u16.to_le_bytes()); // internal attrs
        central.extend_from_slice(&0u32.to_le_bytes()); // external attrs
        central.extend_from_slice(&offset.to_le_bytes());
        central.extend_from_slice(name_bytes);
    }
    let cd_offset = out.len() as u32;
    out.extend_from_slice(&central);
    // end of central directory
    out.extend_from_slice(&0x06054b50u32.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes()); // disk
    out.extend_from_slice(&0u16.to_le_bytes()); // cd disk
    out.extend_from_slice(&(members.len() as u16).to_le_bytes());
    out.extend_from_slice(&(members.len() as u16).to_le_bytes());
    out.extend_from_slice(&(central.len() as u32).to_le_bytes());
    out.extend_from_slice(&cd_offset.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes()); // comment length
    out
}

fn parse_zip(bytes: &[u8]) -> Result<Vec<(String, Vec<u8>)>, ArchiveError> {
    let bad = |m: &str| ArchiveError::NotZip(m.to_string());
    if bytes.len() < 22 {
        return Err(bad("shorter than an end-of-central-directory record"));
    }
    // EOCD: scan backwards for the signature (comment may follow it)
    let mut eocd = None;
    let scan_floor = bytes.len().saturating_sub(22 + 65_535);
    for pos in (scan_floor..=bytes.len() - 22).rev() {
        if bytes[pos..pos + 4] == 0x06054b50u32.to_le_bytes() {
            eocd = Some(pos);
            break;
        }
    }
    let eocd = eocd.ok_or_else(|| bad("no end-of-central-directory signature"))?;
    let count = u16::from_le_bytes([bytes[eocd + 10], bytes[eocd + 11]]) as usize;
    let cd_offset =
        u32::from_le_bytes(bytes[eocd + 16..eocd + 20].try_into().expect("slice len")) as usize;

    let mut members = Vec::with_capacity(count);
    let mut pos = cd_offset;
    for _ in 0..count {
        if bytes.len() < pos + 46 || bytes[pos..pos + 4] != 0x02014b50u32.to_le_bytes() {
            return Err(bad("central directory entry truncated"));
        }
        let crc = u32::from_le_bytes(bytes[pos + 16..pos + 20].try_into().expect("slice len"));
        let size =
            u32::from_le_bytes(bytes[pos + 20..pos + 24].try_into().expect("slice len")) as usize;
        let name_len =
            u16::from_le_bytes(bytes[pos + 28..pos + 30].try_into().expect("slice len")) as usize;
        let extra_len =
            u16::from_le_bytes(bytes[pos + 30..pos + 32].try_into().expect("slice len")) as usize;
        let comment_len =
            u16::from_le_bytes(bytes[pos + 32..pos + 34].try_into().expect("slice len")) as usize;
        let local_offset =
            u32::from_le_bytes(bytes[pos + 42..pos + 46].try_into().expect("slice len")) as usize;
        let name = String::from_utf8(bytes[pos + 46..pos + 46 + name_len].to_vec())
            .map_err(|_| bad("member name is not UTF-8"))?;

        // local header: skip its (possibly different) name/extra lengths
        if bytes.len() < local_offset + 30
            || bytes[local_offset..local_offset + 4] != 0x04034b50u32.to_le_bytes()
        {
            return Err(bad("local header truncated"));
        }
        let l_name = u16::from_le_bytes(
            bytes[local_offset + 26..local_offset + 28]
                .try_into()
                .expect("slice len"),
        ) as usize;
        let l_extra = u16::from_le_bytes(
            bytes[local_offset + 28..local_offset + 30]
                .try_into()
                .expect("slice len"),
        ) as usize;
        let data_start = local_offset + 30 + l_name + l_extra;
        if bytes.len() < data_start + size {
            return Err(bad("member data truncated"));
        }
        let data = bytes[data_start..data_start + size].to_vec();
        if crc32fast::hash(&data) != crc {
            return Err(ArchiveError::Crc { member: name });
        }
        members.push((name, data));
        pos += 46 + name_len + extra_len + comment_len;
    }
    Ok(members)
}

// --- archive content ---

/// Parsed archive: the verbatim target list plus per-range results.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveContent {
    pub targets_json: String,
    pub ranges: Vec<RangeResult>,
}

fn member_set(targets_json: &str, ranges: &[RangeResult]) -> Vec<(String, Vec<u8>)> {
    let mut members = Vec::with_capacity(1 + 2 * ranges.len());
    members.push(("targets.json".to_string(), targets_json.as_bytes().to_vec()));
    for (i, range) in ranges.iter().enumerate() {
        members.push((
            format!("{i}/metadata.json"),
            serde_json::to_vec_pretty(&range.metadata).expect("metadata serializes"),
        ));
        members.push((
            format!("{i}/responses.json"),
            serde_json::to_vec_pretty(&range.responses).expect("responses serialize"),
        ));
    }
    members
}

/// Write the scan archive: `targets.json` first, then the range directories
/// in ascending index order.
pub fn write_archive(
    path: &Path,
    targets_json: &str,
    ranges: &[RangeResult],
) -> Result<(), ArchiveError> {
    let zip = build_zip(&member_set(targets_json, ranges));
    fs::write(path, zip)?;
    Ok(())
}

/// Inverse of [`write_archive`]; validates layout, CRCs, and JSON schemas.
pub fn read_archive(path: &Path) -> Result<ArchiveContent, ArchiveError> {
    let bytes = fs::read(path)?;
    let members = parse_zip(&bytes)?;
    let names: Vec<String> = members.iter().map(|(n, _)| n.clone()).collect();
    validate_layout(&names)?;

    let targets_json = String::from_utf8(members[0].1.clone())
        .map_err(|_| ArchiveError::Layout("targets.json is not UTF-8".into()))?;
    let mut ranges = Vec::new();
    for pair in members[1..].chunks(2) {
        let metadata: ScanMeta =
            serde_json::from_slice(&pair[0].1).map_err(|e| ArchiveError::Json {
                member: pair[0].0.clone(),
                error: e.to_string(),
            })?;
        let responses: Vec<ResponseRecord> =
            serde_json::from_slice(&pair[1].1).map_err(|e| ArchiveError::Json {
                member: pair[1].0.clone(),
                error: e.to_string(),
            })?;
        ranges.push(RangeResult {
            metadata,
            responses,
        });
    }
    Ok(ArchiveContent {
        targets_json,
        ranges,
    })
}

/// Member names in archive order.
pub fn archive_member_names(path: &Path) -> Result<Vec<String>, ArchiveError> {
    let bytes = fs::read(path)?;
    Ok(parse_zip(&bytes)?.into_iter().map(|(n, _)| n).collect())
}

/// `targets.json`, then `<i>/metadata.json` + `<i>/responses.json` for every
/// range index in ascending order.
pub fn validate_layout(names: &[String]) -> Result<(), ArchiveError> {
    if names.first().map(String::as_str) != Some("targets.json") {
        return Err(ArchiveError::Layout(
            "first member must be targets.json".into(),
        ));
    }
    let rest = &names[1..];
    if !rest.len().is_multiple_of(2) {
        return Err(ArchiveError::Layout(
            "range members must come in metadata/responses pairs".into(),
        ));
    }
    for (i, pair) in rest.chunks(2).enumerate() {
        if pair[0] != format!("{i}/metadata.json") || pair[1] != format!("{i}/responses.json") {
            return Err(ArchiveError::Layout(format!(
                "range {i} members out of order: {} / {}",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}
