//! `ringmesh`: single runs, sweeps, topology metrics, morph plans and
//! reference comparisons for the ring-mesh simulator.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 drain timeout,
//! 1 anything else.

mod kv;
mod morph;
mod reference;
mod row;
mod sweep;

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ringmesh_core::engine::DEFAULT_DRAIN_CAP;
use ringmesh_core::traffic::InjectionMode;
use ringmesh_core::{
    plan_region, run, run_traced, Error, LatencyMode, NodeAddress, Pattern, SimConfig,
    TopologyKind, TopologySpec, TraceLevel, TrafficConfig,
};

use kv::{pick, KeyValues};
use reference::{Metric, AVERAGED_RATES, PATTERNS, REFERENCES};
use row::{write_rows, Format, Row, RowKind};
use sweep::SweepSpec;

const SEED_ENV: &str = "RINGMESH_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "ringmesh",
    version,
    about = "Cycle-accurate ring-mesh NoC simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulation and print one result row.
    Simulate(SimulateArgs),
    /// Run the cartesian product of sizes, patterns, rates and seeds.
    Sweep(SweepArgs),
    /// Print diameter, bisection and component counts.
    Analyze(AnalyzeArgs),
    /// Generate or execute a morph plan.
    Morph(MorphArgs),
    /// Compare measured results with the bundled reference values.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// key=value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ringmesh or flat.
    #[arg(long)]
    topology: Option<String>,
    /// PE count; ring-mesh sizes are 16 x a power of two.
    #[arg(long)]
    pes: Option<usize>,
    /// Mesh rows; use with --cols instead of --pes.
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// uniform, bitrev or transpose.
    #[arg(long)]
    pattern: Option<String>,
    /// Injection rate in [0, 1].
    #[arg(long)]
    ir: Option<f64>,
    #[arg(long)]
    cycles: Option<u64>,
    /// Defaults to 10% of --cycles.
    #[arg(long)]
    warmup: Option<u64>,
    /// Defaults to $RINGMESH_SEED, then 1.
    #[arg(long)]
    seed: Option<u64>,
    /// Depth of every router VC and ring-switch buffer.
    #[arg(long)]
    buffer_depth: Option<usize>,
    /// Drain the network after injection stops.
    #[arg(long)]
    drain: Option<bool>,
    #[arg(long)]
    drain_cap: Option<u64>,
    /// source (from generation) or network (from first hop).
    #[arg(long)]
    latency: Option<String>,
    /// bernoulli or exact.
    #[arg(long)]
    injection: Option<String>,
    /// Write the per-packet trace as JSON to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// key=value sweep file (pes, patterns, rates, cycles, seeds, topologies,
    /// warmup, buffer_depth, aggregate); missing axes take the full range.
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    cycles: u64,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long, default_value = "ringmesh")]
    topology: String,
    #[arg(long, conflicts_with = "pes")]
    rows: Option<usize>,
    #[arg(long, requires = "rows")]
    cols: Option<usize>,
    #[arg(long)]
    pes: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug)]
struct MorphArgs {
    #[arg(long, default_value_t = 1)]
    rows: usize,
    #[arg(long, default_value_t = 1)]
    cols: usize,
    /// Plan file, one `dest=x.y.r.p hl= ers= lc= pts=` line per morph.
    #[arg(long, conflicts_with = "region")]
    plan: Option<PathBuf>,
    /// Plan a region of this many PEs instead of reading a plan file.
    #[arg(long)]
    region: Option<usize>,
    /// Block the region grows from, as x.y.
    #[arg(long, default_value = "0.0")]
    anchor: String,
    /// PE type tag carried by generated morphs.
    #[arg(long, default_value_t = 0)]
    pts: u8,
    /// Print the plan without running it.
    #[arg(long)]
    emit: bool,
    /// PE that sends the morphs and probes reachability afterwards.
    #[arg(long, default_value = "0.0.0.0")]
    source: String,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Sweep CSV to read instead of running the reference cells.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 5_000)]
    cycles: u64,
    /// Skip reference cells above this PE count when running.
    #[arg(long, default_value_t = 1024)]
    max_pes: usize,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::DrainTimeout { .. } => 3,
                Error::Undeliverable { .. } => 1,
                _ => 2,
            };
        }
    }
    1
}

fn default_seed() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|e| usage(format!("{SEED_ENV}={v:?}: {e}"))),
        Err(_) => Ok(1),
    }
}

fn parse_kind(s: &str) -> Result<TopologyKind> {
    s.parse().map_err(|e: Error| usage(e.to_string()))
}

fn parse_topology(
    kind: TopologyKind,
    pes: Option<usize>,
    dims: Option<(usize, usize)>,
) -> Result<TopologySpec> {
    let spec = match (pes, dims) {
        (Some(_), Some(_)) => return Err(usage("give either pes or rows/cols, not both")),
        (Some(n), None) => TopologySpec::for_pe_count(kind, n)?,
        (None, Some((rows, cols))) => match kind {
            TopologyKind::RingMesh => TopologySpec::ring_mesh(rows, cols),
            TopologyKind::FlatMesh => TopologySpec::flat_mesh(rows, cols),
        },
        (None, None) => return Err(usage("a size is required: pes, or rows and cols")),
    };
    spec.validate()?;
    Ok(spec)
}

const SIMULATE_KEYS: &[&str] = &[
    "topology",
    "pes",
    "rows",
    "cols",
    "pattern",
    "ir",
    "cycles",
    "warmup",
    "seed",
    "buffer_depth",
    "drain",
    "drain_cap",
    "latency",
    "injection",
    "format",
];

fn simulate_config(a: &SimulateArgs) -> Result<(SimConfig, Format)> {
    let file = KeyValues::load(a.config.as_deref()).map_err(|e| usage(format!("{e:#}")))?;
    file.expect_only(SIMULATE_KEYS)
        .map_err(|e| usage(e.to_string()))?;
    let u = |e: anyhow::Error| usage(format!("{e:#}"));

    let kind = parse_kind(
        &pick(a.topology.clone(), &file, "topology")
            .map_err(u)?
            .unwrap_or_else(|| "ringmesh".into()),
    )?;
    let pes: Option<usize> = pick(a.pes, &file, "pes").map_err(u)?;
    let rows: Option<usize> = pick(a.rows, &file, "rows").map_err(u)?;
    let cols: Option<usize> = pick(a.cols, &file, "cols").map_err(u)?;
    let dims = match (rows, cols) {
        (Some(r), Some(c)) => Some((r, c)),
        (None, None) => None,
        _ => return Err(usage("rows and cols must be given together")),
    };
    let topology = parse_topology(kind, pes, dims)?;

    let pattern_name = pick(a.pattern.clone(), &file, "pattern")
        .map_err(u)?
        .unwrap_or_else(|| "uniform".into());
    let pattern: Pattern = pattern_name
        .parse()
        .map_err(|e: Error| usage(e.to_string()))?;
    let ir = pick(a.ir, &file, "ir").map_err(u)?.unwrap_or(0.5);
    let seed = match pick(a.seed, &file, "seed").map_err(u)? {
        Some(s) => s,
        None => default_seed()?,
    };
    let mut traffic = TrafficConfig::new(pattern, ir, seed);
    if let Some(mode) = pick(a.injection.clone(), &file, "injection").map_err(u)? {
        traffic.injection = match mode.as_str() {
            "bernoulli" => InjectionMode::Bernoulli,
            "exact" => InjectionMode::ExactCount,
            other => return Err(usage(format!("unknown injection mode {other:?}"))),
        };
    }

    let cycles = pick(a.cycles, &file, "cycles")
        .map_err(u)?
        .unwrap_or(10_000);
    let mut cfg = SimConfig::new(topology, traffic, cycles);
    cfg.warmup = pick(a.warmup, &file, "warmup").map_err(u)?;
    cfg.drain = pick(a.drain, &file, "drain").map_err(u)?.unwrap_or(true);
    cfg.drain_cap = pick(a.drain_cap, &file, "drain_cap")
        .map_err(u)?
        .unwrap_or(DEFAULT_DRAIN_CAP);
    if let Some(d) = pick(a.buffer_depth, &file, "buffer_depth").map_err(u)? {
        cfg.network.router.vc_depth = d;
        cfg.network.ring.buffer_depth = d;
    }
    if let Some(mode) = pick(a.latency.clone(), &file, "latency").map_err(u)? {
        cfg.latency = match mode.as_str() {
            "source" => LatencyMode::Source,
            "network" => LatencyMode::Network,
            other => return Err(usage(format!("unknown latency mode {other:?}"))),
        };
    }
    if a.trace.is_some() {
        cfg.trace = TraceLevel::Packets;
    }
    cfg.validate()?;
    if cfg.network.router.vc_depth == 0 {
        return Err(usage("buffer depth must be positive"));
    }
    let format = pick(a.format, &file, "format")
        .map_err(u)?
        .unwrap_or_default();
    Ok((cfg, format))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let (cfg, format) = simulate_config(a)?;
    let stats = match &a.trace {
        None => run(&cfg)?,
        Some(path) => {
            let (stats, trace) = run_traced(&cfg)?;
            let f = std::fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))?;
            serde_json::to_writer(io::BufWriter::new(f), &trace)?;
            stats
        }
    };
    let mut row = Row::from_run(&cfg, &stats);
    row.reference_throughput = reference::lookup(
        Metric::Throughput,
        cfg.topology.kind,
        cfg.topology.pe_count(),
        Some(&row.pattern),
        false,
        cfg.traffic.injection_rate,
    );
    write_rows(io::stdout().lock(), &[row], format)
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(usage("threads must be positive"));
        }
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let seed = default_seed()?;
    let spec = match &a.spec {
        None => SweepSpec::full(a.cycles, seed),
        Some(path) => {
            let kv = KeyValues::load(Some(path)).map_err(|e| usage(format!("{e:#}")))?;
            SweepSpec::from_kv(&kv, a.cycles, seed).map_err(|e| usage(format!("{e:#}")))?
        }
    };
    let rows = thread_pool(a.threads)?.install(|| sweep::run_sweep(&spec));
    let failed = rows.iter().filter(|r| r.row_kind == RowKind::Error).count();
    if failed > 0 {
        eprintln!("warning: {failed} sweep cell(s) failed; see the error column");
    }
    write_rows(io::stdout().lock(), &rows, a.format)
}

#[derive(Serialize)]
struct AnalyzeRow {
    kind: String,
    rows: usize,
    cols: usize,
    pes: usize,
    routers: usize,
    ringlets: usize,
    diameter: u32,
    bisection_bits_per_cycle: u64,
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    let kind = parse_kind(&a.topology)?;
    let dims = match (a.rows, a.cols) {
        (Some(r), Some(c)) => Some((r, c)),
        (Some(r), None) => Some((r, r)),
        _ => None,
    };
    let spec = parse_topology(kind, a.pes, dims)?;
    let bisection = spec.bisection_bandwidth();
    if bisection.degenerate {
        eprintln!(
            "warning: a {}x{} mesh has no router-to-router cut; bisection is reported as 0",
            spec.rows, spec.cols
        );
    }
    let row = AnalyzeRow {
        kind: kind.to_string(),
        rows: spec.rows,
        cols: spec.cols,
        pes: spec.pe_count(),
        routers: spec.router_count(),
        ringlets: spec.ringlet_count(),
        diameter: spec.diameter(),
        bisection_bits_per_cycle: bisection.bits_per_cycle,
    };
    let out = io::stdout().lock();
    match a.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.serialize(&row)?;
            w.flush()?;
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, &row)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn parse_anchor(s: &str) -> Result<(u8, u8)> {
    let (x, y) = s
        .split_once('.')
        .ok_or_else(|| usage(format!("anchor must be x.y, got {s:?}")))?;
    let p = |v: &str| {
        v.parse::<u8>()
            .map_err(|e| usage(format!("anchor {s:?}: {e}")))
    };
    Ok((p(x)?, p(y)?))
}

fn cmd_morph(a: &MorphArgs) -> Result<()> {
    let spec = TopologySpec::ring_mesh(a.rows, a.cols);
    spec.validate()?;
    let plan = match (&a.plan, a.region) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            morph::parse_plan(&text).map_err(|e| usage(format!("{e:#}")))?
        }
        (None, Some(n)) => {
            let anchor = parse_anchor(&a.anchor)?;
            morph::plan_lines(&plan_region(&spec, n, anchor, a.pts)?)
        }
        (None, None) => return Err(usage("give --plan FILE or --region N")),
    };
    for line in &plan {
        spec.check(&line.dest)?;
    }
    let mut out = io::stdout().lock();
    if a.emit {
        for line in &plan {
            writeln!(out, "{}", line.render())?;
        }
        return Ok(());
    }
    let source: NodeAddress = a.source.parse().map_err(|e: Error| usage(e.to_string()))?;
    spec.check(&source)?;
    let report = morph::execute(spec, source, &plan)?;
    match a.format {
        Format::Csv => {
            write!(out, "{}", report.to_csv())?;
            eprintln!("{}", report.summary());
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &report)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareRow {
    metric: &'static str,
    topology: String,
    pes: usize,
    pattern: String,
    injection_rate: f64,
    measured: Option<f64>,
    reference: f64,
    ratio: Option<f64>,
}

/// Sweep needed to cover every reference entry up to `max_pes`.
fn reference_sweeps(cycles: u64, seed: u64, max_pes: usize) -> Vec<SweepSpec> {
    let pes = |kind: TopologyKind, metric: Metric| -> Vec<usize> {
        let mut v: Vec<usize> = REFERENCES
            .iter()
            .filter(|r| r.kind == kind && r.metric == metric && r.pes <= max_pes)
            .map(|r| r.pes)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let all_patterns = vec![
        Pattern::UniformRandom,
        Pattern::BitReversal,
        Pattern::Transpose,
    ];
    let mut out = Vec::new();
    for kind in [TopologyKind::RingMesh, TopologyKind::FlatMesh] {
        let mut lat = pes(kind, Metric::Latency);
        if kind == TopologyKind::RingMesh {
            // Throughput references at full load ride along with the
            // uniform pattern of the latency sweep where sizes overlap.
            for p in pes(kind, Metric::Throughput) {
                if !lat.contains(&p) {
                    lat.push(p);
                }
            }
            lat.sort_unstable();
        }
        for p in lat {
            out.push(SweepSpec {
                pe_counts: vec![p],
                patterns: all_patterns.clone(),
                rates: AVERAGED_RATES.to_vec(),
                cycles,
                seeds: vec![seed],
                topologies: vec![kind],
                warmup: None,
                buffer_depth: None,
                aggregate: true,
            });
        }
    }
    out
}

fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let rows = match &a.input {
        Some(path) => {
            let f =
                std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let mut rows =
                row::read_rows(f).map_err(|e| usage(format!("{}: {e:#}", path.display())))?;
            if !rows.iter().any(|r| r.row_kind == RowKind::Aggregate) {
                rows.extend(sweep::aggregate(&rows));
            }
            rows
        }
        None => {
            let seed = default_seed()?;
            let pool = thread_pool(a.threads)?;
            let mut rows = Vec::new();
            for s in reference_sweeps(a.cycles, seed, a.max_pes) {
                rows.extend(pool.install(|| sweep::run_sweep(&s)));
            }
            rows
        }
    };

    let mut out = Vec::new();
    for r in REFERENCES {
        let topology = r.kind.to_string();
        let pattern = r.pattern.unwrap_or("mixed");
        let rate = r
            .rate
            .unwrap_or(AVERAGED_RATES.iter().sum::<f64>() / AVERAGED_RATES.len() as f64);
        let matching: Vec<&Row> = rows
            .iter()
            .filter(|row| {
                row.topology == topology
                    && row.pes == r.pes
                    && row.pattern == pattern
                    && (row.injection_rate - rate).abs() < 1e-9
                    && match r.rate {
                        None => row.row_kind == RowKind::Aggregate,
                        Some(_) => row.row_kind == RowKind::Run,
                    }
            })
            .collect();
        let measured = (!matching.is_empty()).then(|| {
            let sum: f64 = matching
                .iter()
                .map(|row| match r.metric {
                    Metric::Throughput => row.throughput_pkts_per_cycle,
                    Metric::Latency => row.avg_latency_cycles,
                })
                .sum();
            sum / matching.len() as f64
        });
        debug_assert!(r.pattern.is_none() || PATTERNS.contains(&pattern));
        out.push(CompareRow {
            metric: r.metric.name(),
            topology,
            pes: r.pes,
            pattern: pattern.to_string(),
            injection_rate: rate,
            measured,
            reference: r.value,
            ratio: measured.map(|m| m / r.value),
        });
    }

    let stdout = io::stdout().lock();
    match a.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(stdout);
            for row in &out {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let mut stdout = stdout;
            serde_json::to_writer_pretty(&mut stdout, &out)?;
            writeln!(stdout)?;
        }
    }
    if out.iter().all(|r| r.measured.is_none()) {
        bail!("no rows matched any reference value");
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Morph(a) => cmd_morph(a),
        Command::Compare(a) => cmd_compare(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
