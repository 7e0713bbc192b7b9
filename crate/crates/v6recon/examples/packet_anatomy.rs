//! Build a probe packet, wrap it in an ICMPv6 error, and validate both.
//!
//! ```bash
//! cargo run --example packet_anatomy
//! ```

use v6recon::addr::Address128;
use v6recon::codec::{
    build_error_response, build_probe, echo_reply_for, hex_dump, verify_and_extract, MacKey,
};
use v6recon::schedule::ProbeToken;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let key = MacKey::from_hex(&"a1".repeat(32))?;
    let src: Address128 = "2001:db8::1".parse()?;
    let target: Address128 = "2003:c0:d700:4200::".parse()?;
    let token = ProbeToken(7);

    let probe = build_probe(src, target, 64, token, &key);
    println!("probe ({} bytes): {}", probe.len(), hex_dump(&probe));
    println!("  token bytes 44..48: {}", hex_dump(&probe[44..48]));
    println!("  MAC bytes   48..80: {}", hex_dump(&probe[48..80]));

    // a CPE answering the subnet-router anycast probe from its WAN address
    let cpe: Address128 = "2003:c0:d700:4200:3e:a6ff:fe2f:1234".parse()?;
    let reply = echo_reply_for(&probe, cpe, 64)?;
    let (tok, parsed) =
        verify_and_extract(&reply, &key, 64, src, |t| (t == token).then_some(target))
            .expect("echo reply validates");
    println!(
        "echo reply -> token {:#010x}, responder {}",
        tok.0, parsed.responder
    );

    // a router seven hops out rejecting the probe
    let mut seen = probe.clone();
    seen[7] = 64 - 7; // hop limit as the router saw it
    let error = build_error_response(1, 3, 0, "2003:c0:d700::1".parse()?, &seen, 64)?;
    let (_, parsed) = verify_and_extract(&error, &key, 64, src, |t| (t == token).then_some(target))
        .expect("error response validates");
    println!(
        "error response -> type {} code {} from {}, distance {:?} hops",
        parsed.icmp_type, parsed.icmp_code, parsed.responder, parsed.distance
    );

    // corrupting any authenticated byte kills the packet
    let mut corrupt = reply.clone();
    corrupt[50] ^= 1;
    let verdict = verify_and_extract(&corrupt, &key, 64, src, |_| Some(target));
    println!("corrupted reply -> {verdict:?}");
    Ok(())
}
