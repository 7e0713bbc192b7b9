//! Batch command-line front end. Every subcommand is a thin wrapper over
//! the library; see `examples/` for the same operations driven as code.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use v6recon::addr::{read_address_list, read_prefix_list, Address128, Prefix};
use v6recon::analysis::{
    aggregate_hitlist, classify_iids, compute_pr, iid_byte_histogram, lookup_vendor,
    sample_probe_targets, scan_stats, Hitlist, OuiTable,
};
use v6recon::archive::{read_archive, write_archive};
use v6recon::codec::MacKey;
use v6recon::engine::{run_scan, ScanConfig, VirtualClock};
use v6recon::schedule::{parse_target_list, targets_to_json};
use v6recon::simnet::{build_topology, Scenario, SimTransport};
use v6recon::zorder::{build_heatmap, render_heatmap, write_heatmap_csv};

/// Environment variable consulted when --key is absent.
const KEY_ENV: &str = "V6RECON_KEY";

#[derive(Parser)]
#[command(
    name = "v6recon",
    version,
    about = "IPv6 access-network reconnaissance toolkit",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a hitlist as a Z-order address-space heatmap (binary PGM)
    Map(MapArgs),
    /// Probe target ranges and write the result archive
    Probe(ProbeArgs),
    /// Aggregate an address list into a fixed-length prefix hitlist
    Aggregate(AggregateArgs),
    /// Classify interface identifiers of an address list
    Classify(ClassifyArgs),
    /// Infer per-responder prefixes of responsibility from a scan archive
    Pr(PrArgs),
    /// Sample probe target ranges from a hitlist
    GenTargets(GenTargetsArgs),
    /// Summarize a scan archive
    Stats(StatsArgs),
    /// Build a simulated topology and print its summary
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct MapArgs {
    /// Hitlist file: one CIDR prefix per line
    #[arg(long)]
    hitlist: PathBuf,
    /// Prefix shown by the map
    #[arg(long)]
    viewport: Prefix,
    /// Sub-prefix length of one heatmap cell
    #[arg(long = "cell-len")]
    cell_len: u8,
    /// Scale intensities by log2(count+1)
    #[arg(long)]
    log: bool,
    /// Output PGM path
    #[arg(long)]
    out: PathBuf,
    /// Also dump nonzero cells as x,y,count rows
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    /// Target list: JSON array of {prefix, suffix, suffix_len}
    #[arg(long)]
    targets: PathBuf,
    /// Probes per second
    #[arg(long)]
    rate: f64,
    /// IPv6 hop limit for outgoing probes
    #[arg(long = "hop-limit", default_value_t = 64)]
    hop_limit: u8,
    /// 64 hex digits; defaults to $V6RECON_KEY, else a random key
    #[arg(long)]
    key: Option<String>,
    /// `sim:<scenario.json>` or `live`
    #[arg(long)]
    transport: String,
    /// Output archive path (ZIP)
    #[arg(long)]
    out: PathBuf,
    /// Source address of the scan
    #[arg(long, default_value = "fd00::1")]
    source: Address128,
    /// Seconds to keep receiving after the last probe
    #[arg(long, default_value_t = 5.0)]
    grace: f64,
    /// Acknowledge that live scanning sends real packets
    #[arg(long = "i-understand-live")]
    i_understand_live: bool,
}

#[derive(Args)]
struct AggregateArgs {
    /// Address list: one address per line, '#' comments
    #[arg(long)]
    input: PathBuf,
    /// Prefix length to aggregate to (64, 56, 52, 48, ...)
    #[arg(long)]
    plen: u8,
    /// Output hitlist file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Address list: one address per line, '#' comments
    #[arg(long)]
    input: PathBuf,
    /// OUI table (OUI<TAB>Name rows) for vendor attribution of EUI-64s
    #[arg(long = "oui-table")]
    oui_table: Option<PathBuf>,
    /// Also write a CSV histogram of this IID byte (0-based index)
    #[arg(long = "histogram-byte")]
    histogram_byte: Option<u8>,
    /// Split the byte histogram by the u/l bit
    #[arg(long = "split-ul")]
    split_ul: bool,
    /// Histogram CSV output path (stdout if omitted)
    #[arg(long = "histogram-out")]
    histogram_out: Option<PathBuf>,
}

#[derive(Args)]
struct PrArgs {
    /// Scan archive produced by `probe`
    #[arg(long)]
    archive: PathBuf,
    /// Prefix under test; defaults to each range's own prefix
    #[arg(long)]
    prefix: Option<Prefix>,
    /// Histogram CSV output path (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenTargetsArgs {
    /// Hitlist file: one CIDR prefix per line
    #[arg(long)]
    hitlist: PathBuf,
    /// Number of hitlist entries to sample
    #[arg(long)]
    n: usize,
    /// Length of the random sub-prefix picked inside each entry
    #[arg(long)]
    deeper: u8,
    /// One probe per sub-prefix of this length
    #[arg(long)]
    resolution: u8,
    /// Sampling seed
    #[arg(long)]
    seed: u64,
    /// Probe suffix: the subnet-router anycast address (all-zero tail) or
    /// a seeded random interface identifier per range
    #[arg(long, value_enum, default_value_t = SuffixMode::Anycast)]
    suffix: SuffixMode,
    /// Output target list (JSON)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SuffixMode {
    Anycast,
    RandomIid,
}

#[derive(Args)]
struct StatsArgs {
    /// Scan archive produced by `probe`
    archive: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (JSON)
    #[arg(long)]
    scenario: PathBuf,
}

/// Failure carrying the process exit code: 1 runtime, 2 usage.
struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 2,
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 1,
        }
    }
}

fn open_input(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::usage(format!("cannot open {}: {e}", path.display())))
}

fn create_output(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))
}

fn cmd_map(args: MapArgs) -> Result<(), CliError> {
    let entries = read_prefix_list(open_input(&args.hitlist)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.hitlist.display())))?;
    let heatmap = build_heatmap(&entries, args.viewport, args.cell_len, args.log)
        .map_err(|e| CliError::usage(e.to_string()))?;
    render_heatmap(&heatmap, &args.out).map_err(|e| CliError::runtime(e.to_string()))?;
    if let Some(csv_path) = &args.csv {
        let mut out = create_output(csv_path)?;
        write_heatmap_csv(&heatmap, &mut out).map_err(|e| CliError::runtime(e.to_string()))?;
    }
    eprintln!(
        "mapped {} entries ({} outside the viewport) into {}x{} cells",
        heatmap.total(),
        heatmap.ignored,
        heatmap.width,
        heatmap.height
    );
    Ok(())
}

fn scan_key(flag: Option<&str>) -> Result<MacKey, CliError> {
    if let Some(hex) = flag {
        return MacKey::from_hex(hex).map_err(|e| CliError::usage(e.to_string()));
    }
    if let Ok(hex) = std::env::var(KEY_ENV) {
        return MacKey::from_hex(&hex).map_err(|e| CliError::usage(format!("{KEY_ENV}: {e}")));
    }
    let key = MacKey::from_entropy();
    eprintln!(
        "no key supplied; generated one (fingerprint {})",
        key.fingerprint()
    );
    Ok(key)
}

fn cmd_probe(args: ProbeArgs) -> Result<(), CliError> {
    let targets_json = std::fs::read_to_string(&args.targets)
        .map_err(|e| CliError::usage(format!("cannot open {}: {e}", args.targets.display())))?;
    let ranges = parse_target_list(&targets_json).map_err(CliError::usage)?;
    if args.rate <= 0.0 {
        return Err(CliError::usage("--rate must be positive"));
    }
    let key = scan_key(args.key.as_deref())?;
    let mut config = ScanConfig::new(args.source, args.rate, key);
    config.hop_limit = args.hop_limit;
    config.receive_grace_s = args.grace;

    let outcome = match args.transport.as_str() {
        "live" => {
            if !args.i_understand_live {
                return Err(CliError::usage(
                    "live scanning needs --i-understand-live; it sends real packets \
                     and requires a raw ICMPv6 socket",
                ));
            }
            return Err(CliError::runtime(
                "this build ships without the raw-socket adapter; run against \
                 --transport sim:<scenario.json>, or provide a Transport for your \
                 environment via the library API",
            ));
        }
        sim if sim.starts_with("sim:") => {
            let scenario_path = PathBuf::from(&sim[4..]);
            let scenario = Scenario::load(&scenario_path)
                .map_err(|e| CliError::usage(format!("{}: {e}", scenario_path.display())))?;
            let topology = build_topology(&scenario).map_err(|e| CliError::usage(e.to_string()))?;
            let clock = VirtualClock::new();
            let mut transport = SimTransport::new(topology, clock.share());
            let mut scan_clock = clock.share();
            run_scan(&ranges, &config, &mut transport, &mut scan_clock)
                .map_err(|e| CliError::runtime(e.to_string()))?
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown transport {other:?}; use sim:<scenario.json> or live"
            )));
        }
    };

    for failure in &outcome.parse_failures {
        eprintln!("parse failure ({}): {}", failure.reason, failure.packet_hex);
    }
    write_archive(&args.out, &targets_json, &outcome.ranges)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let responses: usize = outcome.ranges.iter().map(|r| r.responses.len()).sum();
    eprintln!(
        "sent {} probes, recorded {} responses ({} bad MACs, {} parse failures) -> {}",
        outcome.probes_sent,
        responses,
        outcome.bad_mac,
        outcome.parse_failures.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_aggregate(args: AggregateArgs) -> Result<(), CliError> {
    if args.plen == 0 || args.plen > 128 {
        return Err(CliError::usage("--plen must be in 1..=128"));
    }
    let addresses = read_address_list(open_input(&args.input)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.input.display())))?;
    let hitlist = aggregate_hitlist(addresses, args.plen);
    let mut out = create_output(&args.out)?;
    for prefix in hitlist.prefixes() {
        writeln!(out, "{prefix}").map_err(|e| CliError::runtime(e.to_string()))?;
    }
    out.flush().map_err(|e| CliError::runtime(e.to_string()))?;
    eprintln!(
        "{} unique /{} prefixes -> {}",
        hitlist.len(),
        args.plen,
        args.out.display()
    );
    Ok(())
}

fn cmd_classify(args: ClassifyArgs) -> Result<(), CliError> {
    let addresses = read_address_list(open_input(&args.input)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.input.display())))?;
    let breakdown = classify_iids(addresses.iter().copied());
    let mut output = serde_json::to_value(&breakdown).expect("breakdown serializes");

    if let Some(table_path) = &args.oui_table {
        let table = OuiTable::parse(open_input(table_path)?)
            .map_err(|e| CliError::usage(format!("{}: {e}", table_path.display())))?;
        let mut vendors: std::collections::BTreeMap<String, u64> = Default::default();
        let unique: std::collections::HashSet<u64> =
            addresses.iter().map(|a| a.iid().value()).collect();
        for iid in unique {
            if let Ok(mac) = v6recon::addr::InterfaceIdentifier::new(iid).to_mac() {
                *vendors
                    .entry(lookup_vendor(mac, &table).to_string())
                    .or_default() += 1;
            }
        }
        output["vendors"] = serde_json::to_value(vendors).expect("vendor map serializes");
    }
    println!("{}", serde_json::to_string_pretty(&output).expect("json"));

    if let Some(byte_index) = args.histogram_byte {
        if byte_index > 7 {
            return Err(CliError::usage("--histogram-byte must be 0..=7"));
        }
        let hist = iid_byte_histogram(addresses.iter().map(|a| a.iid()), byte_index, args.split_ul);
        let mut rows = String::from(if args.split_ul {
            "value,count_ul_clear,count_ul_set\n"
        } else {
            "value,count\n"
        });
        for value in 0..256usize {
            rows.push_str(&format!("{value}"));
            for series in &hist.series {
                rows.push_str(&format!(",{}", series[value]));
            }
            rows.push('\n');
        }
        match &args.histogram_out {
            Some(path) => {
                let mut out = create_output(path)?;
                out.write_all(rows.as_bytes())
                    .and_then(|_| out.flush())
                    .map_err(|e| CliError::runtime(e.to_string()))?;
            }
            None => print!("{rows}"),
        }
    }
    Ok(())
}

fn cmd_pr(args: PrArgs) -> Result<(), CliError> {
    let content = read_archive(&args.archive)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.archive.display())))?;
    let ranges = parse_target_list(&content.targets_json).map_err(CliError::usage)?;
    if ranges.len() != content.ranges.len() {
        return Err(CliError::runtime(
            "target list and range directories disagree",
        ));
    }
    let mut histogram: std::collections::BTreeMap<u8, u64> = Default::default();
    let mut discarded = 0u64;
    for (range, result) in ranges.iter().zip(&content.ranges) {
        let under_test = args.prefix.unwrap_or_else(|| range.prefix());
        let filtered: Vec<_> = result
            .responses
            .iter()
            .filter(|r| under_test.contains(r.target))
            .copied()
            .collect();
        if filtered.is_empty() {
            continue;
        }
        let pr = compute_pr(&filtered, under_test);
        discarded += pr.discarded.len() as u64;
        for (len, count) in pr.histogram {
            *histogram.entry(len).or_default() += count;
        }
    }
    let mut csv = String::from("plen,responders\n");
    for (len, count) in &histogram {
        csv.push_str(&format!("{len},{count}\n"));
    }
    match &args.out {
        Some(path) => {
            let mut out = create_output(path)?;
            out.write_all(csv.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::runtime(e.to_string()))?;
        }
        None => print!("{csv}"),
    }
    eprintln!("{discarded} responders discarded as infrastructure");
    Ok(())
}

fn cmd_gen_targets(args: GenTargetsArgs) -> Result<(), CliError> {
    let prefixes = read_prefix_list(open_input(&args.hitlist)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.hitlist.display())))?;
    let plen = prefixes
        .iter()
        .map(|p| p.length())
        .max()
        .ok_or_else(|| CliError::usage("hitlist is empty"))?;
    let hitlist = Hitlist::from_prefixes(plen, prefixes);
    let mut ranges =
        sample_probe_targets(&hitlist, args.n, args.deeper, args.resolution, args.seed)
            .map_err(|e| CliError::usage(e.to_string()))?;
    if args.suffix == SuffixMode::RandomIid {
        // keep the sampled prefixes, but aim each range at one random
        // interface identifier instead of the subnet-router anycast
        let mut rng = v6recon::rng::DetRng::new(args.seed ^ 0x005e_ed1d);
        for range in &mut ranges {
            let iid = rng.next_u64().max(1); // never the anycast address
            *range = v6recon::schedule::TargetRange::new(
                range.prefix(),
                iid as u128,
                range.suffix_len(),
            )
            .map_err(|e| CliError::usage(e.to_string()))?;
        }
    }
    let json = targets_to_json(&ranges);
    std::fs::write(&args.out, &json).map_err(|e| CliError::runtime(e.to_string()))?;
    let total: u128 = ranges.iter().map(|r| r.size()).sum();
    eprintln!(
        "{} ranges, {} targets -> {}",
        ranges.len(),
        total,
        args.out.display()
    );
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let content = read_archive(&args.archive)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.archive.display())))?;
    let targets = parse_target_list(&content.targets_json).map_err(CliError::usage)?;
    let stats = scan_stats(&targets, &content.ranges);
    println!("{}", serde_json::to_string_pretty(&stats).expect("json"));
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let scenario = Scenario::load(&args.scenario)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.scenario.display())))?;
    let topology = build_topology(&scenario).map_err(|e| CliError::usage(e.to_string()))?;
    let summary = topology.summarize();
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "seed": scenario.seed,
            "infra_router": scenario.infra_router,
            "infra_mode": scenario.infra.mode,
            "pools": summary,
        }))
        .expect("json")
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Map(args) => cmd_map(args),
        Command::Probe(args) => cmd_probe(args),
        Command::Aggregate(args) => cmd_aggregate(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Pr(args) => cmd_pr(args),
        Command::GenTargets(args) => cmd_gen_targets(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
