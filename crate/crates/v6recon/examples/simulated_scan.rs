//! Scan a simulated access-provider network end to end and write the
//! result archive.
//!
//! ```bash
//! cargo run --example simulated_scan
//! ```

use v6recon::analysis::scan_stats;
use v6recon::archive::{archive_member_names, write_archive};
use v6recon::codec::MacKey;
use v6recon::engine::{run_scan, ScanConfig, VirtualClock};
use v6recon::schedule::{targets_to_json, TargetRange};
use v6recon::simnet::{build_topology, Scenario, SimTransport};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario::from_json(include_str!("../scenarios/oneandone.json"))?;
    let topology = build_topology(&scenario)?;
    for pool in topology.summarize() {
        println!(
            "pool {} /{} customers: {}/{} occupied",
            pool.prefix, pool.customer_plen, pool.occupied, pool.slots
        );
    }

    // one probe into each /56 of the pool: the per-customer anycast sweep
    let range = TargetRange::anycast_sweep("2001:16b8:6f00::/40".parse()?, 56)?;
    let targets = [range];
    println!("probing {} targets", range.size());

    let key = MacKey::from_hex(&"42".repeat(32))?;
    let mut config = ScanConfig::new("fd00::1".parse()?, 200_000.0, key);
    config.receive_grace_s = 1.0;

    // the virtual clock makes the run deterministic and sleep-free
    let clock = VirtualClock::new();
    let mut transport = SimTransport::new(topology, clock.share());
    let mut scan_clock = clock.share();
    let outcome = run_scan(&targets, &config, &mut transport, &mut scan_clock)?;

    let out = std::env::temp_dir().join("v6recon-examples");
    std::fs::create_dir_all(&out)?;
    let path = out.join("oneandone_scan.zip");
    write_archive(&path, &targets_to_json(&targets), &outcome.ranges)?;

    let stats = scan_stats(&targets, &outcome.ranges);
    println!(
        "sent {} probes in {:.3} virtual seconds",
        outcome.probes_sent, outcome.ranges[0].metadata.duration_s
    );
    println!(
        "responses {}, unique responders {}, with EUI-64 {}",
        stats.responses, stats.unique_responders, stats.responders_with_eui64
    );
    println!(
        "archive {} members: {:?}",
        path.display(),
        archive_member_names(&path)?
    );
    Ok(())
}
