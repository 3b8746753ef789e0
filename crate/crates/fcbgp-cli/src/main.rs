//! `fcbgp`: scenario simulation, metric sweeps, fixture inspection, and
//! update-churn accounting over the fcbgp library.
//!
//! Exit codes: 0 ok, 1 usage error, 2 data error, 3 invariant violation.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fcbgp::analysis::{
    self, filtering_csv, hijack_csv, AsTopology, DeploymentPlan, HijackMode, UpdateRecord,
};
use fcbgp::simnet::{self, SimConfig, SimError};
use fcbgp::trust::{AsNumber, Prefix};
use fcbgp::wire::{decode_update, read_fixture, FixtureRecord};
use fcbgp::{binding, sync};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

const OUT_DIR_ENV: &str = "FCBGP_OUT_DIR";
const BUNDLED_SCENARIO: &str = include_str!("../scenarios/partial_line.fcs");

#[derive(Parser)]
#[command(name = "fcbgp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its event trace.
    Simulate(SimulateArgs),
    /// Sweep deployment rates and write hijack/filtering CSVs.
    Metrics(MetricsArgs),
    /// Dump a `.fcbgp` fixture file.
    Inspect(InspectArgs),
    /// Churn statistics over a path-records file.
    Churn(ChurnArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file; the bundled five-AS line scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// RNG seed; also keys the derived AS key pairs.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    tick_budget: u64,
    /// Output directory; FCBGP_OUT_DIR overrides the default `.`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// CAIDA-style AS relationship file (`as1|as2|rel`). Synthetic topology
    /// when omitted.
    #[arg(long, requires = "prefix2as")]
    as_rel: Option<PathBuf>,
    /// prefix2as file (`address<TAB>length<TAB>asn`).
    #[arg(long, requires = "as_rel")]
    prefix2as: Option<PathBuf>,
    /// Monitored-path file, one whitespace-separated AS path per line,
    /// origin first. Synthetic valley-free samples when omitted.
    #[arg(long)]
    paths: Option<PathBuf>,
    /// Synthetic topology size.
    #[arg(long, default_value_t = 500)]
    asn_count: usize,
    /// Preferential-attachment links per new AS.
    #[arg(long, default_value_t = 2)]
    attach: usize,
    /// Monitored paths to sample when none are supplied.
    #[arg(long, default_value_t = 1000)]
    path_count: usize,
    /// Deployment rates, comma separated, in [0,1].
    #[arg(long, default_value = "0.005,0.01,0.02,0.05,0.1,0.2", value_delimiter = ',')]
    rates: Vec<f64>,
    /// Attacker distances L, comma separated.
    #[arg(long, default_value = "1,2,3,4", value_delimiter = ',')]
    l_values: Vec<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    fixture: PathBuf,
}

#[derive(Args)]
struct ChurnArgs {
    /// Records file: `asn|prefix|as1,as2,...` per line, `#` comments.
    records: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are success; everything else is usage.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Metrics(args) => cmd_metrics(&args),
        Command::Inspect(args) => cmd_inspect(&args),
        Command::Churn(args) => cmd_churn(&args),
    }
}

fn out_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn data_err(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_DATA)
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<PathBuf, ExitCode> {
    if let Err(e) = std::fs::create_dir_all(dir) {
        return Err(data_err(format!("cannot create {}: {e}", dir.display())));
    }
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| data_err(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn cmd_simulate(args: &SimulateArgs) -> ExitCode {
    let text = match &args.scenario {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => return data_err(format!("cannot read {}: {e}", path.display())),
        },
        None => BUNDLED_SCENARIO.to_string(),
    };
    let scenario = match simnet::parse_scenario(&text) {
        Ok(sc) => sc,
        Err(e) => return data_err(e),
    };
    let config = SimConfig {
        tick_budget: args.tick_budget,
        ..SimConfig::default()
    };
    let (sim, trace) = match simnet::run_scenario(&scenario, args.seed, config) {
        Ok(pair) => pair,
        Err(e @ SimError::BudgetExhausted { .. }) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVARIANT);
        }
        Err(e) => return data_err(e),
    };
    let dir = out_dir(&args.out);
    let mut body = trace.lines.join("\n");
    body.push('\n');
    let path = match write_out(&dir, "trace.txt", &body) {
        Ok(p) => p,
        Err(code) => return code,
    };
    println!("scenario ran to quiescence at tick {}", sim.now());
    println!("trace: {} ({} lines)", path.display(), trace.lines.len());
    println!("trace digest: {}", trace.digest());
    for asn in sim.asns() {
        let node = sim.node(asn).unwrap();
        for entry in node.speaker.rib_entries() {
            let Some(best) = node.speaker.best_entry(&entry.prefix) else {
                continue;
            };
            if best.as_path != entry.as_path {
                continue;
            }
            let path: Vec<String> = best.as_path.iter().map(|a| a.0.to_string()).collect();
            println!(
                "{asn} best {} via [{}] {:?}",
                best.prefix,
                path.join(" "),
                best.classification
            );
        }
    }
    ExitCode::SUCCESS
}

fn load_paths_file(path: &Path) -> Result<Vec<Vec<AsNumber>>, ExitCode> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| data_err(format!("cannot read {}: {e}", path.display())))?;
    let mut paths = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut p = Vec::new();
        for tok in line.split_whitespace() {
            let asn: u32 = tok
                .parse()
                .map_err(|_| data_err(format!("{}:{}: bad ASN {tok:?}", path.display(), i + 1)))?;
            p.push(AsNumber(asn));
        }
        if p.len() < 2 {
            return Err(data_err(format!(
                "{}:{}: path needs at least two ASes",
                path.display(),
                i + 1
            )));
        }
        paths.push(p);
    }
    Ok(paths)
}

fn cmd_metrics(args: &MetricsArgs) -> ExitCode {
    if args.rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
        eprintln!("error: rates must be in [0,1]");
        return ExitCode::from(EXIT_USAGE);
    }
    let mut topo: AsTopology = match (&args.as_rel, &args.prefix2as) {
        (Some(rel), Some(p2a)) => {
            let rel_text = match std::fs::read_to_string(rel) {
                Ok(t) => t,
                Err(e) => return data_err(format!("cannot read {}: {e}", rel.display())),
            };
            let p2a_text = match std::fs::read_to_string(p2a) {
                Ok(t) => t,
                Err(e) => return data_err(format!("cannot read {}: {e}", p2a.display())),
            };
            match analysis::load_topology(&rel_text, &p2a_text) {
                Ok(t) => t,
                Err(e) => return data_err(e),
            }
        }
        _ => analysis::generate_scale_free(args.asn_count, args.attach, args.seed),
    };
    match &args.paths {
        Some(path) => match load_paths_file(path) {
            Ok(p) => topo.monitored_paths = p,
            Err(code) => return code,
        },
        None => analysis::generate_monitored_paths(&mut topo, args.path_count, args.seed),
    }

    let mut hijack_rows = Vec::new();
    for &rate in &args.rates {
        let plan = DeploymentPlan::top_by_degree(&topo, rate);
        for &l in &args.l_values {
            for mode in [HijackMode::FcBgp, HijackMode::BgpSec] {
                match analysis::hijacking_rate(&topo, &plan, l, mode) {
                    Ok(v) => hijack_rows.push((rate, l, mode, v)),
                    Err(e) => return data_err(e),
                }
            }
        }
    }
    let filter_rows = match analysis::average_filtering_curve(&topo, &args.rates) {
        Ok(rows) => rows,
        Err(e) => return data_err(e),
    };

    // Cross-check the figure-level laws before publishing numbers.
    for &l in &args.l_values {
        let mut prev_fc = f64::INFINITY;
        let mut prev_sec = f64::INFINITY;
        for &rate in &args.rates {
            let fc = hijack_rows
                .iter()
                .find(|(r, ll, m, _)| *r == rate && *ll == l && *m == HijackMode::FcBgp)
                .unwrap()
                .3;
            let sec = hijack_rows
                .iter()
                .find(|(r, ll, m, _)| *r == rate && *ll == l && *m == HijackMode::BgpSec)
                .unwrap()
                .3;
            if fc > sec || fc > prev_fc || sec > prev_sec {
                eprintln!("error: hijack-rate law violated at rate {rate} L={l}");
                return ExitCode::from(EXIT_INVARIANT);
            }
            prev_fc = fc;
            prev_sec = sec;
        }
    }
    if filter_rows.windows(2).any(|w| w[1].1 < w[0].1) {
        eprintln!("error: filtering curve not monotone");
        return ExitCode::from(EXIT_INVARIANT);
    }

    let dir = out_dir(&args.out);
    let hijack = match write_out(&dir, "hijack.csv", &hijack_csv(&hijack_rows)) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let filtering = match write_out(&dir, "filtering.csv", &filtering_csv(&filter_rows)) {
        Ok(p) => p,
        Err(code) => return code,
    };
    println!(
        "{} ASes, {} monitored paths",
        topo.as_count(),
        topo.monitored_paths.len()
    );
    println!("wrote {}", hijack.display());
    println!("wrote {}", filtering.display());
    ExitCode::SUCCESS
}

fn hex_dump(bytes: &[u8]) {
    for (i, chunk) in bytes.chunks(16).enumerate() {
        let hexes: Vec<String> = chunk.iter().map(|b| format!("{b:02x}")).collect();
        println!("    {:04x}  {}", i * 16, hexes.join(" "));
    }
}

fn cmd_inspect(args: &InspectArgs) -> ExitCode {
    let bytes = match std::fs::read(&args.fixture) {
        Ok(b) => b,
        Err(e) => return data_err(format!("cannot read {}: {e}", args.fixture.display())),
    };
    let records = match read_fixture(&bytes) {
        Ok(r) => r,
        Err(e) => return data_err(e),
    };
    println!("{}: {} records", args.fixture.display(), records.len());
    for (i, rec) in records.iter().enumerate() {
        match rec {
            FixtureRecord::Update(payload) => {
                println!("[{i}] update, {} bytes", payload.len());
                hex_dump(payload);
                match decode_update(payload) {
                    Ok(update) => {
                        let path: Vec<String> =
                            update.as_path.iter().map(|a| a.0.to_string()).collect();
                        println!(
                            "    {:?} {} path [{}]",
                            update.kind,
                            update.prefix,
                            path.join(" ")
                        );
                        for attr in &update.attributes {
                            println!(
                                "    attr type-code {} flags {:#04x} E={} ({} bytes)",
                                attr.type_code,
                                attr.flags,
                                u8::from(attr.extended()),
                                attr.value.len()
                            );
                        }
                        if let Ok(fcs) = update.fcs() {
                            for fc in fcs {
                                println!("    fc {fc}");
                            }
                        }
                    }
                    Err(e) => return data_err(e),
                }
            }
            FixtureRecord::Binding(payload) => {
                println!("[{i}] binding, {} bytes", payload.len());
                hex_dump(payload);
                match binding::decode_binding(payload) {
                    Ok(msg) => {
                        println!("    {msg}");
                        if msg.fc_list.is_empty() {
                            println!("    off-path form (empty fc-list)");
                        }
                    }
                    Err(e) => return data_err(e),
                }
            }
            FixtureRecord::Sync(payload) => {
                println!("[{i}] sync, {} bytes", payload.len());
                hex_dump(payload);
                match sync::decode_sync(payload) {
                    Ok(rec) => println!(
                        "    round {} leader {} {:?}",
                        rec.round, rec.leader, rec.kind
                    ),
                    Err(e) => return data_err(e),
                }
            }
        }
    }
    ExitCode::SUCCESS
}

fn cmd_churn(args: &ChurnArgs) -> ExitCode {
    let text = match std::fs::read_to_string(&args.records) {
        Ok(t) => t,
        Err(e) => return data_err(format!("cannot read {}: {e}", args.records.display())),
    };
    let mut stream: Vec<UpdateRecord> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 3 {
            return data_err(format!(
                "{}:{}: expected asn|prefix|path",
                args.records.display(),
                i + 1
            ));
        }
        let src = match fields[0].parse::<u32>() {
            Ok(a) => AsNumber(a),
            Err(_) => {
                return data_err(format!(
                    "{}:{}: bad ASN {:?}",
                    args.records.display(),
                    i + 1,
                    fields[0]
                ))
            }
        };
        let prefix: Prefix = match fields[1].parse() {
            Ok(p) => p,
            Err(e) => return data_err(format!("{}:{}: {e}", args.records.display(), i + 1)),
        };
        let mut path = Vec::new();
        for tok in fields[2].split(',') {
            match tok.trim().parse::<u32>() {
                Ok(a) => path.push(AsNumber(a)),
                Err(_) => {
                    return data_err(format!(
                        "{}:{}: bad path ASN {tok:?}",
                        args.records.display(),
                        i + 1
                    ))
                }
            }
        }
        let distinct: BTreeSet<_> = path.iter().collect();
        if distinct.len() != path.len() {
            return data_err(format!(
                "{}:{}: repeated AS in path",
                args.records.display(),
                i + 1
            ));
        }
        stream.push((src, prefix, path));
    }
    if stream.is_empty() {
        return data_err("no records");
    }
    let stats = analysis::update_churn_stats(&stream);
    println!("total updates: {}", stats.total);
    println!(
        "new-path: {} ({:.4})",
        stats.new_path,
        stats.new_path_fraction()
    );
    println!(
        "path-change: {} ({:.4})",
        stats.path_change,
        stats.path_change_fraction()
    );
    println!("duplicate: {}", stats.duplicate);
    println!("unchanged-fc fraction: {:.4}", stats.unchanged_fc_fraction);
    println!("changed-fc histogram:");
    for (changed, count) in &stats.changed_fc_histogram {
        println!("  {changed} -> {count}");
    }
    ExitCode::SUCCESS
}
