//! Show the reverse IP-sequential probe order and range interleaving.
//!
//! ```bash
//! cargo run --example scan_order
//! ```

use v6recon::schedule::{make_schedule, range_target, TargetRange};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // two ranges of different sizes: 16 addresses and 4 addresses
    let big = TargetRange::anycast_sweep("2001:db8:aa00::/60".parse()?, 64)?;
    let small = TargetRange::anycast_sweep("2001:db8:bb00::/62".parse()?, 64)?;
    let ranges = [big, small];

    println!(
        "range 0: {} targets, range 1: {} targets",
        big.size(),
        small.size()
    );
    println!("interleaved schedule (bit-reversed counters):");
    for item in make_schedule(&ranges)? {
        let range = &ranges[item.range_index as usize];
        let target = range_target(range, item.address_index as u64)?;
        println!(
            "  range {} counter {:2} -> {}",
            item.range_index, item.address_index, target
        );
    }
    Ok(())
}
