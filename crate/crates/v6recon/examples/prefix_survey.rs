//! Infer customer prefix lengths: sample deep sub-prefixes from a hitlist,
//! probe each at /64 resolution, and compute every responder's prefix of
//! responsibility.
//!
//! ```bash
//! cargo run --example prefix_survey
//! ```

use std::collections::BTreeMap;

use v6recon::addr::Prefix;
use v6recon::analysis::{compute_pr, sample_probe_targets, Hitlist};
use v6recon::codec::MacKey;
use v6recon::engine::{run_scan, ScanConfig, VirtualClock};
use v6recon::simnet::{build_topology, Scenario, SimTransport};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario::from_json(include_str!("../scenarios/telekom.json"))?;
    let topology = build_topology(&scenario)?;

    // pretend we only know the pool's /48s from passive collection
    let pool: Prefix = "2003:c0:d700::/40".parse()?;
    let hitlist48 = Hitlist::from_prefixes(
        48,
        (0..256u128).map(|i| {
            Prefix::containing(
                v6recon::addr::Address128::new(pool.address().value() | (i << 80)),
                48,
            )
        }),
    );

    // survey: 4 random /48s, one random /52 inside each, probed per /64
    let ranges = sample_probe_targets(&hitlist48, 4, 52, 64, 11)?;
    let total: u128 = ranges.iter().map(|r| r.size()).sum();
    println!("{} ranges, {} probes", ranges.len(), total);

    let key = MacKey::from_hex(&"0f".repeat(32))?;
    let mut config = ScanConfig::new("fd00::1".parse()?, 500_000.0, key);
    config.receive_grace_s = 1.0;
    let clock = VirtualClock::new();
    let mut transport = SimTransport::new(topology, clock.share());
    let mut scan_clock = clock.share();
    let outcome = run_scan(&ranges, &config, &mut transport, &mut scan_clock)?;

    // responsibility histogram across all probed prefixes
    let mut histogram: BTreeMap<u8, u64> = BTreeMap::new();
    for (range, result) in ranges.iter().zip(&outcome.ranges) {
        let pr = compute_pr(&result.responses, range.prefix());
        for (len, count) in pr.histogram {
            *histogram.entry(len).or_default() += count;
        }
    }
    println!("prefix-of-responsibility histogram:");
    for (len, count) in &histogram {
        println!("  /{len}: {count} responders");
    }
    let mode = histogram
        .iter()
        .max_by_key(|&(_, c)| *c)
        .map(|(l, _)| *l)
        .expect("responses collected");
    println!("=> customers get /{mode} prefixes");
    Ok(())
}
