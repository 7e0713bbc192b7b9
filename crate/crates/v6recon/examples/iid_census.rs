//! Classify interface identifiers of a synthetic address collection and
//! attribute EUI-64 ones to vendors.
//!
//! ```bash
//! cargo run --example iid_census
//! ```

use std::collections::BTreeMap;

use v6recon::addr::{Address128, Eui48, InterfaceIdentifier};
use v6recon::analysis::{classify_iids, iid_byte_histogram, lookup_vendor, OuiTable};
use v6recon::rng::DetRng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = DetRng::new(0xce_05);
    let base = 0x2001_0db8_0000_0000_0000_0000_0000_0000u128;
    let mut addresses: Vec<Address128> = Vec::new();

    // a population mixing the four generation styles
    let ouis: [[u8; 3]; 2] = [[0x3c, 0xa6, 0x2f], [0x00, 0xe0, 0xfc]];
    for i in 0..2_000u64 {
        let oui = ouis[(i % 2) as usize];
        let mac = Eui48::new([
            oui[0],
            oui[1],
            oui[2],
            (i >> 16) as u8,
            (i >> 8) as u8,
            i as u8,
        ]);
        addresses.push(Address128::new(
            base | InterfaceIdentifier::from_mac(mac).value() as u128,
        ));
    }
    for i in 0..3_000u64 {
        addresses.push(Address128::new(base | (0x1000 + i) as u128)); // DHCP-style
    }
    for _ in 0..10_000 {
        // opaque: high entropy, u/l set half the time
        let iid = rng.next_u64() | 0x1000_0000_0000_0000;
        addresses.push(Address128::new(base | iid as u128));
    }
    for _ in 0..35_000 {
        // privacy extensions never set the u/l bit
        let iid = (rng.next_u64() | 0x1000_0000_0000_0000) & !0x0200_0000_0000_0000;
        addresses.push(Address128::new(base | iid as u128));
    }

    let breakdown = classify_iids(addresses.iter().copied());
    println!("{}", serde_json::to_string_pretty(&breakdown)?);

    // vendor attribution of the EUI-64 share
    let table = OuiTable::parse(include_str!("../data/oui_test.tsv").as_bytes())?;
    let mut vendors: BTreeMap<&str, u64> = BTreeMap::new();
    for addr in &addresses {
        if let Ok(mac) = addr.iid().to_mac() {
            *vendors.entry(lookup_vendor(mac, &table)).or_default() += 1;
        }
    }
    println!("vendors: {vendors:?}");

    // first-byte histogram split by the u/l bit
    let hist = iid_byte_histogram(addresses.iter().map(|a| a.iid()), 0, true);
    let clear: u64 = hist.series[0].iter().sum();
    let set: u64 = hist.series[1].iter().sum();
    println!("first-byte series: {clear} with u/l clear, {set} with u/l set");
    Ok(())
}
