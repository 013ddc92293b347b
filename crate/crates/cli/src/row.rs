//! Versioned result rows and their CSV/JSON writers.

use std::io::Write;

use anyhow::Result;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use ringmesh_core::{SimConfig, SimStats};

/// Bumped whenever a column is added, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    /// One simulation.
    Run,
    /// Mean over injection rates, or over rates and patterns.
    Aggregate,
    /// A sweep cell that failed; `error` says why.
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub schema_version: u32,
    pub version: String,
    pub row_kind: RowKind,
    pub topology: String,
    pub rows: usize,
    pub cols: usize,
    pub pes: usize,
    pub pattern: String,
    pub injection_rate: f64,
    pub seed: u64,
    pub cycles: u64,
    pub warmup: u64,
    pub injected: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub avg_latency_cycles: f64,
    pub p99_latency_cycles: f64,
    pub throughput_pkts_per_cycle: f64,
    pub reference_latency_cycles: Option<f64>,
    pub reference_throughput: Option<f64>,
    pub error: Option<String>,
    /// Flags that reproduce this row.
    pub config: String,
}

/// `key=value` rendering of a run's full configuration.
pub fn config_string(cfg: &SimConfig) -> String {
    let t = &cfg.topology;
    let n = &cfg.network;
    format!(
        "topology={} rows={} cols={} pattern={} ir={} seed={} cycles={} warmup={} drain={} \
         drain_cap={} latency={} injection={} payload={} vc_depth={} ring_buffer_depth={} \
         ring_weight={} mesh_weight={} starvation_threshold={}",
        t.kind,
        t.rows,
        t.cols,
        cfg.traffic.pattern,
        cfg.traffic.injection_rate,
        cfg.traffic.seed,
        cfg.cycles,
        cfg.warmup_cycles(),
        cfg.drain,
        cfg.drain_cap,
        format!("{:?}", cfg.latency).to_ascii_lowercase(),
        format!("{:?}", cfg.traffic.injection).to_ascii_lowercase(),
        format!("{:?}", cfg.traffic.payload).to_ascii_lowercase(),
        n.router.vc_depth,
        n.ring.buffer_depth,
        n.router.ring_weight,
        n.router.mesh_weight,
        n.ring.starvation_threshold,
    )
}

impl Row {
    fn base(cfg: &SimConfig, kind: RowKind) -> Self {
        let t = &cfg.topology;
        Self {
            schema_version: SCHEMA_VERSION,
            version: VERSION.to_string(),
            row_kind: kind,
            topology: t.kind.to_string(),
            rows: t.rows,
            cols: t.cols,
            pes: t.pe_count(),
            pattern: cfg.traffic.pattern.to_string(),
            injection_rate: cfg.traffic.injection_rate,
            seed: cfg.traffic.seed,
            cycles: cfg.cycles,
            warmup: cfg.warmup_cycles(),
            injected: 0,
            delivered: 0,
            dropped: 0,
            avg_latency_cycles: 0.0,
            p99_latency_cycles: 0.0,
            throughput_pkts_per_cycle: 0.0,
            reference_latency_cycles: None,
            reference_throughput: None,
            error: None,
            config: config_string(cfg),
        }
    }

    pub fn from_run(cfg: &SimConfig, stats: &SimStats) -> Self {
        Self {
            injected: stats.packets_injected,
            delivered: stats.packets_delivered,
            dropped: stats.dropped,
            avg_latency_cycles: stats.avg_latency_cycles,
            p99_latency_cycles: stats.p99_latency_cycles as f64,
            throughput_pkts_per_cycle: stats.throughput_pkts_per_cycle,
            ..Self::base(cfg, RowKind::Run)
        }
    }

    pub fn from_error(cfg: &SimConfig, err: &anyhow::Error) -> Self {
        Self {
            error: Some(format!("{err:#}")),
            ..Self::base(cfg, RowKind::Error)
        }
    }

    /// Mean of the latency and throughput columns; counters are summed.
    pub fn aggregate(members: &[&Row], pattern: &str) -> Option<Self> {
        let first = *members.first()?;
        let n = members.len() as f64;
        let mean = |f: fn(&Row) -> f64| members.iter().map(|r| f(r)).sum::<f64>() / n;
        let mut rates: Vec<String> = members
            .iter()
            .map(|r| r.injection_rate.to_string())
            .collect();
        rates.dedup();
        let mut patterns: Vec<&str> = members.iter().map(|r| r.pattern.as_str()).collect();
        patterns.sort_unstable();
        patterns.dedup();
        Some(Self {
            row_kind: RowKind::Aggregate,
            pattern: pattern.to_string(),
            injection_rate: mean(|r| r.injection_rate),
            injected: members.iter().map(|r| r.injected).sum(),
            delivered: members.iter().map(|r| r.delivered).sum(),
            dropped: members.iter().map(|r| r.dropped).sum(),
            avg_latency_cycles: mean(|r| r.avg_latency_cycles),
            p99_latency_cycles: mean(|r| r.p99_latency_cycles),
            throughput_pkts_per_cycle: mean(|r| r.throughput_pkts_per_cycle),
            reference_latency_cycles: None,
            reference_throughput: None,
            error: None,
            config: format!(
                "mean over {} runs: patterns={} rates={}",
                members.len(),
                patterns.join(","),
                rates.join(",")
            ),
            ..first.clone()
        })
    }
}

pub fn write_rows<W: Write>(out: W, rows: &[Row], format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn read_rows<R: std::io::Read>(input: R) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        if row.schema_version != SCHEMA_VERSION {
            anyhow::bail!(
                "row has schema version {}, this build reads {SCHEMA_VERSION}",
                row.schema_version
            );
        }
        rows.push(row);
    }
    Ok(rows)
}
