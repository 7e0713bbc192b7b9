//! Acceptance suite: one test per shipping criterion, each printing a
//! pass line with the measured values. Closed-loop criteria run against
//! the deterministic simulated networks in `scenarios/`.

mod hmac_oracle;

use std::collections::{BTreeMap, HashSet};
use std::time::{Duration, Instant};

use v6recon::addr::{Address128, Prefix};
use v6recon::analysis::{
    aggregate_hitlist, classify_iids, compute_pr, sample_probe_targets, scan_stats, Hitlist,
};
use v6recon::archive::{archive_member_names, read_archive, write_archive};
use v6recon::codec::{
    build_error_response, build_probe, echo_reply_for, icmpv6_checksum, verify_and_extract, MacKey,
    ParseFailure, VerifyError,
};
use v6recon::engine::{
    run_scan, EchoTransport, NullTransport, RangeResult, RealClock, ResponseRecord, ScanConfig,
    ScanMeta, ScanOutcome, Transport, TransportError, VirtualClock,
};
use v6recon::rng::DetRng;
use v6recon::schedule::{
    decode_token, encode_token, make_schedule, range_index_bits, range_target, reverse_bits,
    ProbeToken, TargetRange,
};
use v6recon::simnet::{build_topology, Scenario, SimTopology, SimTransport};
use v6recon::zorder::{address_to_xy, prefix_to_rect, xy_to_address};

fn scenario_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn temp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("v6recon-acceptance").join(tag);
    std::fs::create_dir_all(&dir).expect("create temp dir");
    dir
}

fn test_key(byte: u8) -> MacKey {
    MacKey::new([byte; 32])
}

fn sim_scan(
    scenario_file: &str,
    ranges: &[TargetRange],
    rate: f64,
    key_byte: u8,
) -> (ScanOutcome, SimTopology) {
    let scenario = Scenario::load(&scenario_path(scenario_file)).expect("load scenario");
    let topology = build_topology(&scenario).expect("build topology");
    let reference = build_topology(&scenario).expect("reference topology");
    let mut config = ScanConfig::new("fd00::1".parse().unwrap(), rate, test_key(key_byte));
    config.receive_grace_s = 1.0;
    let clock = VirtualClock::new();
    let mut transport = SimTransport::new(topology, clock.share());
    let mut scan_clock = clock.share();
    let outcome = run_scan(ranges, &config, &mut transport, &mut scan_clock).expect("scan");
    (outcome, reference)
}

#[test]
fn criterion_01_zorder_bijection_and_geometry() {
    let start = Instant::now();
    let mut rng = DetRng::new(0xacc1);
    for _ in 0..100_000 {
        let a = Address128::new(rng.next_u128());
        assert_eq!(
            xy_to_address(address_to_xy(a)),
            a,
            "round trip must be exact"
        );
    }
    for _ in 0..1_000 {
        let len = rng.next_below(129) as u8;
        let p = Prefix::containing(Address128::new(rng.next_u128()), len);
        let rect = prefix_to_rect(p);
        let first = address_to_xy(p.first_address());
        let last = address_to_xy(p.last_address());
        assert_eq!(
            (first.x, first.y),
            (rect.x0, rect.y0),
            "{p}: first address at top-left"
        );
        assert_eq!(
            (last.x as u128, last.y as u128),
            (
                rect.x0 as u128 + rect.width - 1,
                rect.y0 as u128 + rect.height - 1
            ),
            "{p}: last address at bottom-right"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!(
        "[PASS] criterion 1: 100000 round trips exact, 1000 prefix corners exact ({} ms)",
        elapsed.as_millis()
    );
}

#[test]
fn criterion_02_reverse_sequential_order() {
    let start = Instant::now();
    let embedded: Vec<u64> = (0..4).map(|v| reverse_bits(v, 2).unwrap()).collect();
    assert_eq!(embedded, vec![0b00, 0b10, 0b01, 0b11]);
    for width in 1..=16u32 {
        let size = 1u64 << width;
        let mut seen = vec![false; size as usize];
        for v in 0..size {
            let r = reverse_bits(v, width).unwrap();
            assert_eq!(
                reverse_bits(r, width).unwrap(),
                v,
                "involution at width {width}"
            );
            assert!(!seen[r as usize], "width {width} not a bijection");
            seen[r as usize] = true;
        }
        assert!(seen.iter().all(|&s| s), "width {width} not exhaustive");
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!(
        "[PASS] criterion 2: counter order 00,10,01,11 reproduced; widths 1-16 exhaustive ({} ms)",
        elapsed.as_millis()
    );
}

#[test]
fn criterion_03_codec_bit_exactness() {
    let start = Instant::now();
    hmac_oracle::self_check();

    let src: Address128 = "2001:db8::1".parse().unwrap();
    let target: Address128 = "2003:c0:d700:4200::".parse().unwrap();

    // layout per the probe packet structure
    let zero_key = MacKey::new([0u8; 32]);
    let probe = build_probe(src, target, 64, ProbeToken(0), &zero_key);
    assert_eq!(probe.len(), 80, "probe is exactly 80 bytes");
    assert_eq!(probe[0] >> 4, 6);
    assert_eq!(u16::from_be_bytes([probe[4], probe[5]]), 40);
    assert_eq!(probe[6], 58);
    assert_eq!(probe[40], 128);
    assert_eq!(probe[41], 0);
    assert_eq!(&probe[44..48], &[0, 0, 0, 0]);

    // the data field must equal the independent oracle's HMAC over the token
    let expected_mac = hmac_oracle::hmac_sha256(&[0u8; 32], &[0, 0, 0, 0]);
    assert_eq!(
        &probe[48..80],
        &expected_mac,
        "HMAC cross-check against the oracle"
    );

    // 10^4 single-byte corruptions in the authenticated token+MAC trailer
    let key = test_key(0x11);
    let probe = build_probe(src, target, 64, ProbeToken(77), &key);
    let reply = echo_reply_for(&probe, target, 64).unwrap();
    let mut rng = DetRng::new(0xf22);
    let mut bad_mac = 0u32;
    for _ in 0..10_000 {
        let mut mutated = reply.clone();
        let pos = mutated.len() - 36 + rng.next_below(36) as usize;
        let mut flip = (rng.next_u64() & 0xff) as u8;
        if flip == 0 {
            flip = 1;
        }
        mutated[pos] ^= flip;
        match verify_and_extract(&mutated, &key, 64, src, |_| Some(target)) {
            Err(VerifyError::BadMac) => bad_mac += 1,
            other => panic!("corrupted trailer yielded {other:?}"),
        }
    }
    assert_eq!(bad_mac, 10_000, "100% of corruptions detected as BadMac");

    // corrupting the reply header bytes inside the trailing-40 window can
    // not produce a record either
    for pos in 40..44 {
        for bit in 0..8 {
            let mut mutated = reply.clone();
            mutated[pos] ^= 1 << bit;
            assert!(
                verify_and_extract(&mutated, &key, 64, src, |_| Some(target)).is_err(),
                "corruption at byte {pos} bit {bit} slipped through"
            );
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    println!(
        "[PASS] criterion 3: layout frozen, HMAC matches oracle, 10000/10000 corruptions rejected ({} ms)",
        elapsed.as_millis()
    );
}

#[test]
fn criterion_04_response_parse_conformance() {
    let key = test_key(0x22);
    let src: Address128 = "2001:db8::1".parse().unwrap();
    let target: Address128 = "2003:c0:d700:4200::".parse().unwrap();
    let responder: Address128 = "2003:c0:d700::1".parse().unwrap();
    let expect = |t: ProbeToken| (t == ProbeToken(5)).then_some(target);

    let probe = build_probe(src, target, 64, ProbeToken(5), &key);

    // echo reply: source recorded, parsing finished, no distance
    let reply = echo_reply_for(&probe, target, 64).unwrap();
    let (_, parsed) = verify_and_extract(&reply, &key, 64, src, expect).unwrap();
    assert_eq!(
        (parsed.icmp_type, parsed.icmp_code, parsed.distance),
        (129, 0, None)
    );

    // error types 1-4 with an intact embedded probe are recorded, and the
    // embedded hop limit 57 under a sent hop limit of 64 estimates 7 hops
    for err_type in 1..=4u8 {
        let mut seen = probe.clone();
        seen[7] = 57;
        let packet = build_error_response(err_type, 0, 0, responder, &seen, 60).unwrap();
        let (_, parsed) = verify_and_extract(&packet, &key, 64, src, expect).unwrap();
        assert_eq!(parsed.icmp_type, err_type);
        assert_eq!(parsed.distance, Some(7), "64 sent, 57 embedded");
        assert_eq!(parsed.responder, responder);
        assert_eq!(parsed.target, target);
    }

    // helper: rewrite a slice of an error message and refresh its checksum
    let mutate = |mut packet: Vec<u8>, at: usize, bytes: &[u8]| -> Vec<u8> {
        packet[at..at + bytes.len()].copy_from_slice(bytes);
        packet[42] = 0;
        packet[43] = 0;
        let outer_src = Address128::from_octets(packet[8..24].try_into().unwrap());
        let outer_dst = Address128::from_octets(packet[24..40].try_into().unwrap());
        let sum = icmpv6_checksum(outer_src, outer_dst, &packet[40..]);
        packet[42..44].copy_from_slice(&sum.to_be_bytes());
        packet
    };
    let wrapped = build_error_response(3, 0, 0, responder, &probe, 60).unwrap();

    // embedded payload length below 40 (truncated embed)
    let truncated = mutate(wrapped.clone(), 52, &39u16.to_be_bytes());
    assert_eq!(
        verify_and_extract(&truncated, &key, 64, src, expect).unwrap_err(),
        VerifyError::Parse(ParseFailure::EmbeddedTooShort { payload_length: 39 })
    );

    // a physically truncated embed shifts the token+MAC window and dies at
    // the MAC check, before any parsing
    let physically_truncated = build_error_response(3, 0, 0, responder, &probe[..60], 60).unwrap();
    assert_eq!(
        verify_and_extract(&physically_truncated, &key, 64, src, expect).unwrap_err(),
        VerifyError::BadMac
    );

    // embedded destination is not the probed target (prefix translation)
    let translated_dst: Address128 = "2003:6:0:4200::".parse().unwrap();
    let wrong_dst = mutate(wrapped.clone(), 72, &translated_dst.octets());
    assert_eq!(
        verify_and_extract(&wrong_dst, &key, 64, src, expect).unwrap_err(),
        VerifyError::Parse(ParseFailure::EmbeddedDestMismatch {
            found: translated_dst,
            expected: target,
        })
    );

    // embedded source is not the scan source
    let foreign: Address128 = "2001:db8::2".parse().unwrap();
    let wrong_src = mutate(wrapped.clone(), 56, &foreign.octets());
    assert_eq!(
        verify_and_extract(&wrong_src, &key, 64, src, expect).unwrap_err(),
        VerifyError::Parse(ParseFailure::EmbeddedSourceMismatch { found: foreign })
    );

    // bad outer checksum (MAC untouched)
    let mut bad_sum = wrapped.clone();
    bad_sum[42] ^= 0x55;
    assert_eq!(
        verify_and_extract(&bad_sum, &key, 64, src, expect).unwrap_err(),
        VerifyError::Parse(ParseFailure::BadChecksum)
    );

    // embedded version and next-header checks
    let bad_version = mutate(wrapped.clone(), 48, &[0x40]);
    assert_eq!(
        verify_and_extract(&bad_version, &key, 64, src, expect).unwrap_err(),
        VerifyError::Parse(ParseFailure::EmbeddedNotIpv6 { version: 4 })
    );
    let bad_next = mutate(wrapped.clone(), 54, &[17]);
    assert_eq!(
        verify_and_extract(&bad_next, &key, 64, src, expect).unwrap_err(),
        VerifyError::Parse(ParseFailure::EmbeddedNextHeader { next_header: 17 })
    );

    // unexpected outer type
    let type_five = {
        let mut p = wrapped.clone();
        p = mutate(p, 40, &[5]);
        p
    };
    assert!(matches!(
        verify_and_extract(&type_five, &key, 64, src, expect).unwrap_err(),
        VerifyError::Parse(ParseFailure::UnexpectedType { icmp_type: 5, .. })
    ));

    println!("[PASS] criterion 4: parse verdict corpus matches, distance(64,57) = 7");
}

#[test]
fn criterion_05_high_utilization_network() {
    let start = Instant::now();
    let pool: Prefix = "2001:16b8:6f00::/40".parse().unwrap();

    // probe every /56 customer slot at its anycast address
    let sweep = TargetRange::anycast_sweep(pool, 56).unwrap();
    assert_eq!(sweep.size(), 65_536);
    let (outcome, _) = sim_scan("oneandone.json", &[sweep], 1_000_000.0, 0x33);
    assert_eq!(outcome.probes_sent, 65_536);
    assert_eq!(outcome.bad_mac, 0);
    assert!(outcome.parse_failures.is_empty());

    let responders: HashSet<Address128> = outcome.ranges[0]
        .responses
        .iter()
        .map(|r| r.responder)
        .collect();
    let utilization = responders.len() as f64 / 65_536.0;
    assert!(
        (0.97..=1.0).contains(&utilization),
        "unique responders / probes = {utilization}"
    );

    // every responder derives from the configured OUI
    for responder in &responders {
        let mac = responder.iid().to_mac().expect("EUI-64 responder");
        assert_eq!(mac.oui(), [0x3c, 0xa6, 0x2f]);
    }

    // survey sampled /52s at /64 resolution: responsibility mode is /56
    let hitlist48 = Hitlist::from_prefixes(
        48,
        (0..256u128)
            .map(|i| Prefix::containing(Address128::new(pool.address().value() | (i << 80)), 48)),
    );
    let survey = sample_probe_targets(&hitlist48, 8, 52, 64, 20).unwrap();
    let total: u128 = survey.iter().map(|r| r.size()).sum();
    assert_eq!(total, 8 * 4096);
    let (survey_outcome, _) = sim_scan("oneandone.json", &survey, 1_000_000.0, 0x34);
    let mut histogram: BTreeMap<u8, u64> = BTreeMap::new();
    for (range, result) in survey.iter().zip(&survey_outcome.ranges) {
        let pr = compute_pr(&result.responses, range.prefix());
        for (len, count) in pr.histogram {
            *histogram.entry(len).or_default() += count;
        }
    }
    let mode = *histogram.iter().max_by_key(|&(_, c)| *c).unwrap().0;
    assert_eq!(mode, 56, "histogram {histogram:?}");

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    println!(
        "[PASS] criterion 5: utilization {:.4}, 100% EUI-64 with configured OUI, PR mode 56 ({} ms)",
        utilization,
        elapsed.as_millis()
    );
}

#[test]
fn criterion_06_routing_loop_network() {
    let start = Instant::now();
    let pool_a: Prefix = "2a02:8108:100::/52".parse().unwrap();
    let pool_b: Prefix = "2a02:8108:200::/52".parse().unwrap();
    let ranges = [
        TargetRange::anycast_sweep(pool_a, 64).unwrap(),
        TargetRange::anycast_sweep(pool_b, 64).unwrap(),
    ];
    let (outcome, topology) = sim_scan("vodafone.json", &ranges, 50_000.0, 0x44);
    assert_eq!(outcome.probes_sent, 8192);

    let infra_router = topology.infra_router();
    let all: Vec<&ResponseRecord> = outcome.ranges.iter().flat_map(|r| &r.responses).collect();
    let loop_errors: Vec<&&ResponseRecord> = all.iter().filter(|r| r.icmp_type != 129).collect();

    // unoccupied space elicits only hop-limit-exceeded errors from the
    // infra router; occupied space only CPE echoes
    let slot_of = |target: Address128, plen: u8, prefix: Prefix| -> u64 {
        ((target.value() >> (128 - plen as u32)) & ((1u128 << (plen - prefix.length())) - 1)) as u64
    };
    for r in &all {
        let (pool, plen, prefix) = if pool_a.contains(r.target) {
            (0usize, 62u8, pool_a)
        } else {
            assert!(pool_b.contains(r.target));
            (1usize, 64u8, pool_b)
        };
        let slot = slot_of(r.target, plen, prefix);
        if r.icmp_type == 129 {
            assert!(topology.occupied(pool, slot), "echo from unoccupied slot");
        } else {
            assert_eq!(
                (r.icmp_type, r.icmp_code),
                (3, 0),
                "only hop-limit-exceeded errors"
            );
            assert_eq!(
                r.responder, infra_router,
                "errors only from the infra router"
            );
            assert!(
                !topology.occupied(pool, slot),
                "loop error for an occupied slot"
            );
            // sent 64, embedded copy carries 1: distance estimate 63
            assert_eq!(r.distance, Some(63));
        }
    }

    let loop_share = loop_errors.len() as f64 / all.len() as f64;
    assert!(
        (0.79..=0.89).contains(&loop_share),
        "loop errors are {loop_share:.4} of all responses"
    );

    let unique: HashSet<Address128> = all.iter().map(|r| r.responder).collect();
    let ratio = all.len() as f64 / unique.len() as f64;
    assert!(ratio >= 5.0, "responses/unique = {ratio:.2}");

    // the responsibility histogram recovers both customer prefix lengths
    let pr_a = compute_pr(&outcome.ranges[0].responses, pool_a);
    let pr_b = compute_pr(&outcome.ranges[1].responses, pool_b);
    assert_eq!(
        pr_a.mode(),
        Some(62),
        "pool A histogram {:?}",
        pr_a.histogram
    );
    assert_eq!(
        pr_b.mode(),
        Some(64),
        "pool B histogram {:?}",
        pr_b.histogram
    );
    // the loop responder covers each whole pool and is discarded
    assert!(pr_a.discarded.contains(&infra_router));
    assert!(pr_b.discarded.contains(&infra_router));

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    println!(
        "[PASS] criterion 6: PR modes {{62,64}}, loop share {:.3}, responses/unique {:.1} ({} ms)",
        loop_share,
        ratio,
        elapsed.as_millis()
    );
}

struct InjectingTransport {
    inner: SimTransport,
    payload: Option<Vec<u8>>,
    after_sends: u64,
    sent: u64,
}

impl Transport for InjectingTransport {
    fn send(&mut self, packet: &[u8]) -> Result<(), TransportError> {
        self.sent += 1;
        self.inner.send(packet)
    }

    fn poll_received(&mut self) -> Result<Vec<Vec<u8>>, TransportError> {
        let mut got = self.inner.poll_received()?;
        if self.sent >= self.after_sends {
            if let Some(packet) = self.payload.take() {
                got.push(packet);
            }
        }
        Ok(got)
    }
}

#[test]
fn criterion_07_silent_network_and_prefix_translation() {
    let pool: Prefix = "2003:c0:d700::/40".parse().unwrap();
    let hitlist48 = Hitlist::from_prefixes(
        48,
        (0..256u128)
            .map(|i| Prefix::containing(Address128::new(pool.address().value() | (i << 80)), 48)),
    );
    let ranges = sample_probe_targets(&hitlist48, 4, 52, 64, 31).unwrap();
    let key = test_key(0x55);
    let src: Address128 = "fd00::1".parse().unwrap();

    // craft a prefix-translated reply for the scan's very first target: the
    // embedded destination is rewritten the way a NAT on the path would
    let token_bits = range_index_bits(ranges.len());
    let token = encode_token(0, 0, token_bits).unwrap();
    let first_target = range_target(&ranges[0], 0).unwrap();
    let mut translated_probe = build_probe(src, first_target, 64, token, &key);
    let rewritten: Address128 = "2003:6:0:4200::".parse().unwrap();
    translated_probe[24..40].copy_from_slice(&rewritten.octets());
    translated_probe[7] = 64 - 7;
    let injected =
        build_error_response(1, 3, 0, "2003:6::1".parse().unwrap(), &translated_probe, 60).unwrap();

    let run = |payload: Option<Vec<u8>>| -> ScanOutcome {
        let scenario = Scenario::load(&scenario_path("telekom.json")).unwrap();
        let topology = build_topology(&scenario).unwrap();
        let clock = VirtualClock::new();
        let mut transport = InjectingTransport {
            inner: SimTransport::new(topology, clock.share()),
            payload,
            after_sends: 1000,
            sent: 0,
        };
        let mut config = ScanConfig::new(src, 1_000_000.0, key.clone());
        config.receive_grace_s = 1.0;
        let mut scan_clock = clock.share();
        run_scan(&ranges, &config, &mut transport, &mut scan_clock).unwrap()
    };

    let clean = run(None);
    let with_injection = run(Some(injected.clone()));

    // silent infrastructure: every response is a CPE echo, none from the
    // infra router, no error types at all
    let scenario = Scenario::load(&scenario_path("telekom.json")).unwrap();
    let topology = build_topology(&scenario).unwrap();
    for result in &clean.ranges {
        for r in &result.responses {
            assert_eq!(r.icmp_type, 129, "silent infra sends no errors");
            assert_ne!(r.responder, topology.infra_router());
        }
    }

    // responsibility mode is /56
    let mut histogram: BTreeMap<u8, u64> = BTreeMap::new();
    for (range, result) in ranges.iter().zip(&clean.ranges) {
        let pr = compute_pr(&result.responses, range.prefix());
        for (len, count) in pr.histogram {
            *histogram.entry(len).or_default() += count;
        }
    }
    let mode = *histogram.iter().max_by_key(|&(_, c)| *c).unwrap().0;
    assert_eq!(mode, 56, "histogram {histogram:?}");

    // the translated reply is logged as a parse failure, not recorded
    assert_eq!(clean.parse_failures.len(), 0);
    assert_eq!(with_injection.parse_failures.len(), 1);
    let failure = &with_injection.parse_failures[0];
    assert!(
        failure.reason.contains("is not the target"),
        "reason: {}",
        failure.reason
    );
    assert_eq!(failure.packet_hex, v6recon::codec::hex_dump(&injected));
    assert_eq!(
        clean.ranges, with_injection.ranges,
        "the injected packet must not add a response record"
    );

    println!(
        "[PASS] criterion 7: zero infra responses, PR mode 56, translated reply logged and dropped"
    );
}

#[test]
fn criterion_08_survey_target_arithmetic() {
    // three networks, 32 sampled /48s each, one /52 per /48, one probe per
    // /64: exactly 131072 addresses per network, 393216 in total
    let mut rng = DetRng::new(0x88);
    let mut grand_total = 0u128;
    for network in 0..3u64 {
        let base = ((0x2003u128 + network as u128) << 112) | 0xc0_0000 << 72;
        let addrs: Vec<Address128> = (0..2000)
            .map(|_| Address128::new(base | (rng.next_u128() & ((1u128 << 88) - 1))))
            .collect();
        let hitlist = aggregate_hitlist(addrs, 48);
        assert!(hitlist.len() >= 32, "synthetic hitlist too small");
        let ranges = sample_probe_targets(&hitlist, 32, 52, 64, 7 + network).unwrap();
        assert_eq!(ranges.len(), 32);
        let per_network: u128 = ranges.iter().map(|r| r.size()).sum();
        assert_eq!(per_network, 131_072, "32 x 4096 targets per network");
        grand_total += per_network;
    }
    assert_eq!(grand_total, 393_216);
    println!("[PASS] criterion 8: 3 x 32 x 4096 = 393216 probe targets exactly");
}

#[test]
fn criterion_09_iid_estimator_recovery() {
    let start = Instant::now();
    // population proportions: manual/DHCP 6.7%, EUI-64 3.6%, opaque 16.5%
    // (half with the u/l bit set), privacy extensions the remaining 73.2%
    // (the published rounded shares sum to 99.8)
    let n = 100_000u64;
    let counts = [6_700u64, 3_600, 16_500, n - 6_700 - 3_600 - 16_500];
    let mut rng = DetRng::new(0x99);
    let mut seen: HashSet<u64> = HashSet::new();
    let mut addresses: Vec<Address128> = Vec::with_capacity(n as usize);
    let base = 0x2003_0000_0000_0000_0000_0000_0000_0000u128;
    fn push_unique(iid: u64, base: u128, seen: &mut HashSet<u64>, out: &mut Vec<Address128>) {
        assert!(
            seen.insert(iid),
            "generator produced duplicate IID {iid:#x}"
        );
        out.push(Address128::new(base | iid as u128));
    }
    fn high_entropy(rng: &mut DetRng, seen: &HashSet<u64>, ul_set: bool) -> u64 {
        loop {
            let mut v = rng.next_u64() | 0x1000_0000_0000_0000; // top 12 bits nonzero
            if ul_set {
                v |= 0x0200_0000_0000_0000;
            } else {
                v &= !0x0200_0000_0000_0000;
            }
            if (v >> 24) & 0xffff == 0xfffe {
                v ^= 1 << 24; // dodge the EUI-64 marker
            }
            if !seen.contains(&v) {
                return v;
            }
        }
    }
    for i in 0..counts[0] {
        push_unique(i + 1, base, &mut seen, &mut addresses); // top 12 bits zero
    }
    for i in 0..counts[1] {
        let mac_low = 0x4_0000 + i; // distinct device bytes
        let mac = [
            0x3c,
            0xa6,
            0x2f,
            (mac_low >> 16) as u8,
            (mac_low >> 8) as u8,
            mac_low as u8,
        ];
        let iid = v6recon::addr::InterfaceIdentifier::from_mac(v6recon::addr::Eui48::new(mac));
        push_unique(iid.value(), base, &mut seen, &mut addresses);
    }
    for i in 0..counts[2] {
        let v = high_entropy(&mut rng, &seen, i % 2 == 0); // u/l set in exactly half
        push_unique(v, base, &mut seen, &mut addresses);
    }
    for _ in 0..counts[3] {
        let v = high_entropy(&mut rng, &seen, false);
        push_unique(v, base, &mut seen, &mut addresses);
    }
    assert_eq!(addresses.len() as u64, n);

    let b = classify_iids(addresses.iter().copied());
    assert_eq!(b.total, n);

    // category partition and the estimator identities hold exactly
    assert_eq!(
        b.eui64 + b.leading_zero12 + (b.total - b.eui64 - b.leading_zero12),
        b.total
    );
    assert_eq!(b.estimates.semantically_opaque, 2 * b.ul_set_remainder);
    assert_eq!(
        b.estimates.manual_dhcp
            + b.estimates.modified_eui64
            + b.estimates.semantically_opaque
            + b.estimates.privacy_extensions,
        b.total
    );
    assert!(!b.privacy_clamped);

    // recovery within 1.5 percentage points per category, both against the
    // generated truth and against the nominal table shares
    let estimates = [
        b.estimates.manual_dhcp,
        b.estimates.modified_eui64,
        b.estimates.semantically_opaque,
        b.estimates.privacy_extensions,
    ];
    let nominal_pct = [6.7, 3.6, 16.5, 73.0];
    for ((estimate, truth), nominal) in estimates.iter().zip(&counts).zip(&nominal_pct) {
        let vs_truth = (*estimate as f64 - *truth as f64).abs() / n as f64 * 100.0;
        let vs_nominal = (*estimate as f64 / n as f64 * 100.0 - nominal).abs();
        assert!(
            vs_truth <= 1.5 && vs_nominal <= 1.5,
            "estimate {estimate} vs truth {truth} / nominal {nominal}%: off by {vs_truth:.3} / {vs_nominal:.3} pp"
        );
    }

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!(
        "[PASS] criterion 9: categories recovered at {:?} vs {:?} ({} ms)",
        estimates,
        counts,
        elapsed.as_millis()
    );
}

#[test]
fn criterion_10_archive_format() {
    let dir = temp_dir("criterion10");
    let mut rng = DetRng::new(0xa0);
    for case in 0..10 {
        let n_ranges = 1 + (case % 4) as usize;
        let ranges: Vec<RangeResult> = (0..n_ranges)
            .map(|_| RangeResult {
                metadata: ScanMeta {
                    source: Address128::new(rng.next_u128()),
                    hop_limit: 64,
                    started: "2020-01-01T00:00:00.000Z".into(),
                    ended: "2020-01-01T00:00:05.000Z".into(),
                    duration_s: 5.0,
                    rate_pps: 50_000.0,
                    key_fingerprint: "0a0b0c0d".into(),
                },
                responses: (0..rng.next_below(50))
                    .map(|_| ResponseRecord {
                        target: Address128::new(rng.next_u128()),
                        responder: Address128::new(rng.next_u128()),
                        icmp_type: if rng.next_below(2) == 0 { 129 } else { 3 },
                        icmp_code: 0,
                        distance: if rng.next_below(2) == 0 {
                            None
                        } else {
                            Some(rng.next_below(200) as u8)
                        },
                    })
                    .collect(),
            })
            .collect();
        let targets_json = format!("[{{\"case\": {case}}}]");
        let path = dir.join(format!("case-{case}.zip"));
        write_archive(&path, &targets_json, &ranges).unwrap();

        // round trip equality (schema validation is part of reading)
        let back = read_archive(&path).unwrap();
        assert_eq!(back.targets_json, targets_json);
        assert_eq!(back.ranges, ranges);

        // member layout: targets.json first, then numbered directories
        let names = archive_member_names(&path).unwrap();
        assert_eq!(names[0], "targets.json");
        for (i, pair) in names[1..].chunks(2).enumerate() {
            assert_eq!(pair[0], format!("{i}/metadata.json"));
            assert_eq!(pair[1], format!("{i}/responses.json"));
        }
        assert_eq!(names.len(), 1 + 2 * n_ranges);
    }
    println!("[PASS] criterion 10: 10 randomized archives round-trip, layout and schema verified");
}

#[test]
fn criterion_11_throughput_floor() {
    // 2^19 probes against in-memory transports on the real clock; the floor
    // demands the half-million-packet run completes within ten seconds
    let range = TargetRange::anycast_sweep("2001:db8::/45".parse().unwrap(), 64).unwrap();
    assert_eq!(range.size(), 524_288);
    let mut config = ScanConfig::new("2001:db8::1".parse().unwrap(), 1e9, test_key(0x66));
    config.receive_grace_s = 0.0;

    let mut null = NullTransport::default();
    let mut clock = RealClock::new();
    let started = Instant::now();
    let outcome = run_scan(&[range], &config, &mut null, &mut clock).unwrap();
    let null_elapsed = started.elapsed();
    assert_eq!(outcome.probes_sent, 524_288);
    let null_pps = outcome.probes_sent as f64 / null_elapsed.as_secs_f64();
    assert!(
        null_elapsed <= Duration::from_secs(10),
        "send-only: {} pps over {:?}",
        null_pps as u64,
        null_elapsed
    );

    // echo transport: every probe also validated on receive
    let mut echo = EchoTransport::default();
    let mut clock = RealClock::new();
    let started = Instant::now();
    let outcome = run_scan(&[range], &config, &mut echo, &mut clock).unwrap();
    let echo_elapsed = started.elapsed();
    assert_eq!(outcome.probes_sent, 524_288);
    let validated: usize = outcome.ranges.iter().map(|r| r.responses.len()).sum();
    assert_eq!(validated, 524_288);
    let echo_pps = outcome.probes_sent as f64 / echo_elapsed.as_secs_f64();
    assert!(
        echo_elapsed <= Duration::from_secs(10),
        "send+validate: {} pps over {:?}",
        echo_pps as u64,
        echo_elapsed
    );

    println!(
        "[PASS] criterion 11: {} pps send-only, {} pps send+validate (floor 52428 pps)",
        null_pps as u64, echo_pps as u64
    );
}

#[test]
fn criterion_12_pr_oracle_equivalence() {
    let mut rng = DetRng::new(0xc12);
    for instance in 0..200 {
        let base = Address128::new((rng.next_u128() >> 56) << 72);
        let under_test = Prefix::containing(base, 56);
        let n_responders = 1 + rng.next_below(64) as usize;
        let mut responses = Vec::new();
        for ri in 0..n_responders {
            let responder = Address128::new(base.value() | 0xaaaa_0000 | ri as u128);
            for _ in 0..1 + rng.next_below(5) {
                // targets at /64 resolution inside the /56 under test
                let target = Address128::new(base.value() | ((rng.next_below(256) as u128) << 64));
                responses.push(ResponseRecord {
                    target,
                    responder,
                    icmp_type: 129,
                    icmp_code: 0,
                    distance: None,
                });
            }
        }
        let pr = compute_pr(&responses, under_test);

        // brute-force oracle: walk every length from 64 down to the prefix
        // under test, take the longest covering all of a responder's targets
        let mut groups: BTreeMap<Address128, Vec<Address128>> = BTreeMap::new();
        for r in &responses {
            groups.entry(r.responder).or_default().push(r.target);
        }
        for (responder, targets) in groups {
            let expected = if targets.len() == 1 {
                Prefix::containing(targets[0], 64)
            } else {
                let mut found = under_test;
                for len in (under_test.length()..=64).rev() {
                    let candidate = Prefix::containing(targets[0], len);
                    if targets.iter().all(|t| candidate.contains(*t)) {
                        found = candidate;
                        break;
                    }
                }
                found
            };
            assert_eq!(
                pr.responsibilities[&responder], expected,
                "instance {instance}, responder {responder}"
            );
            assert_eq!(pr.discarded.contains(&responder), expected == under_test);
        }
    }
    println!("[PASS] criterion 12: compute_pr equals the brute-force oracle on 200 instances");
}

#[test]
fn scan_archive_end_to_end() {
    // the full pipeline glued together: scan, archive, read back, tally
    let dir = temp_dir("pipeline");
    let range =
        TargetRange::anycast_sweep("2001:16b8:6f00:1000::/52".parse().unwrap(), 56).unwrap();
    let (outcome, _) = sim_scan("oneandone.json", &[range], 100_000.0, 0x77);
    let targets_json = v6recon::schedule::targets_to_json(&[range]);
    let path = dir.join("scan.zip");
    write_archive(&path, &targets_json, &outcome.ranges).unwrap();
    let back = read_archive(&path).unwrap();
    assert_eq!(back.ranges, outcome.ranges);
    let stats = scan_stats(&[range], &back.ranges);
    assert_eq!(stats.probes_sent, 16);
    assert!(stats.unique_responders > 0);
    assert_eq!(stats.responders_with_eui64, stats.unique_responders);
    let schedule = make_schedule(&[range]).unwrap();
    assert_eq!(schedule.total(), 16);
    assert_eq!(decode_token(encode_token(0, 3, 0).unwrap(), 0), (0, 3));
    println!("[PASS] pipeline: scan -> archive -> read -> stats consistent");
}
