//! Render an address-space heatmap of a prefix hitlist.
//!
//! Builds a hitlist from the CPEs of a simulated topology, then maps it
//! onto the Z-order grid and writes a PGM image plus a CSV dump:
//!
//! ```bash
//! cargo run --example address_map
//! ```

use std::fs::File;
use std::io::BufWriter;

use v6recon::analysis::aggregate_hitlist;
use v6recon::simnet::{build_topology, Scenario};
use v6recon::zorder::{build_heatmap, prefix_to_rect, write_heatmap_csv, write_pgm};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario::from_json(include_str!("../scenarios/telekom.json"))?;
    let topology = build_topology(&scenario)?;

    // collect the WAN addresses of all active CPEs and aggregate to /48
    let addresses = (0..topology.slot_count(0))
        .filter(|&slot| topology.occupied(0, slot))
        .map(|slot| topology.cpe_wan_address(0, slot));
    let hitlist = aggregate_hitlist(addresses, 48);
    println!("hitlist48 entries: {}", hitlist.len());

    // the pool prefix as viewport, one cell per /48
    let viewport = "2003:c0:d700::/40".parse()?;
    let heatmap = build_heatmap(hitlist.prefixes(), viewport, 48, false)?;
    println!(
        "viewport rect: {:?}, heatmap grid {}x{}",
        prefix_to_rect(viewport),
        heatmap.width,
        heatmap.height
    );

    let out_dir = std::env::temp_dir().join("v6recon-examples");
    std::fs::create_dir_all(&out_dir)?;
    let pgm_path = out_dir.join("telekom_pool.pgm");
    let csv_path = out_dir.join("telekom_pool.csv");
    write_pgm(&heatmap, &mut BufWriter::new(File::create(&pgm_path)?))?;
    write_heatmap_csv(&heatmap, &mut BufWriter::new(File::create(&csv_path)?))?;
    println!("wrote {} and {}", pgm_path.display(), csv_path.display());
    Ok(())
}
