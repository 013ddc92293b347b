//! Cartesian-product sweeps and rate-averaged aggregation.

use anyhow::{bail, Result};
use rayon::prelude::*;

use ringmesh_core::{run, Pattern, SimConfig, TopologyKind, TopologySpec, TrafficConfig};

use crate::kv::KeyValues;
use crate::reference::{self, Metric, AVERAGED_RATES};
use crate::row::{Row, RowKind};

pub const SWEEP_KEYS: &[&str] = &[
    "pes",
    "patterns",
    "rates",
    "cycles",
    "seeds",
    "topologies",
    "warmup",
    "buffer_depth",
    "aggregate",
];

pub const FULL_PES: [usize; 7] = [16, 32, 64, 128, 256, 512, 1024];

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub pe_counts: Vec<usize>,
    pub patterns: Vec<Pattern>,
    pub rates: Vec<f64>,
    pub cycles: u64,
    pub seeds: Vec<u64>,
    pub topologies: Vec<TopologyKind>,
    pub warmup: Option<u64>,
    pub buffer_depth: Option<usize>,
    pub aggregate: bool,
}

impl SweepSpec {
    /// Every size, pattern and rate on both topologies.
    pub fn full(cycles: u64, seed: u64) -> Self {
        Self {
            pe_counts: FULL_PES.to_vec(),
            patterns: vec![
                Pattern::UniformRandom,
                Pattern::BitReversal,
                Pattern::Transpose,
            ],
            rates: AVERAGED_RATES.to_vec(),
            cycles,
            seeds: vec![seed],
            topologies: vec![TopologyKind::RingMesh, TopologyKind::FlatMesh],
            warmup: None,
            buffer_depth: None,
            aggregate: true,
        }
    }

    /// Missing keys fall back to the full sweep.
    pub fn from_kv(kv: &KeyValues, default_cycles: u64, default_seed: u64) -> Result<Self> {
        kv.expect_only(SWEEP_KEYS)?;
        let base = Self::full(default_cycles, default_seed);
        let spec = Self {
            pe_counts: kv.list("pes")?.unwrap_or(base.pe_counts),
            patterns: kv.list("patterns")?.unwrap_or(base.patterns),
            rates: kv.list("rates")?.unwrap_or(base.rates),
            cycles: kv.get("cycles")?.unwrap_or(base.cycles),
            seeds: kv.list("seeds")?.unwrap_or(base.seeds),
            topologies: kv.list("topologies")?.unwrap_or(base.topologies),
            warmup: kv.get("warmup")?,
            buffer_depth: kv.get("buffer_depth")?,
            aggregate: kv.get("aggregate")?.unwrap_or(base.aggregate),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for &pes in &self.pe_counts {
            if !FULL_PES.contains(&pes) {
                bail!("sweep PE count {pes} is not one of {FULL_PES:?}");
            }
        }
        for &rate in &self.rates {
            if !(rate > 0.0 && rate <= 1.0) {
                bail!("sweep rate {rate} is outside (0, 1]");
            }
        }
        if self.cycles == 0 {
            bail!("sweep needs a positive cycle count");
        }
        if self.seeds.is_empty() || self.patterns.is_empty() || self.topologies.is_empty() {
            bail!("sweep axes must be non-empty");
        }
        Ok(())
    }

    /// Cells in output order: topology, size, pattern, rate, seed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &kind in &self.topologies {
            for &pes in &self.pe_counts {
                for &pattern in &self.patterns {
                    for &rate in &self.rates {
                        for &seed in &self.seeds {
                            cells.push(Cell {
                                kind,
                                pes,
                                pattern,
                                rate,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        cells
    }

    fn config(&self, cell: &Cell) -> Result<SimConfig> {
        let spec = TopologySpec::for_pe_count(cell.kind, cell.pes)?;
        let mut cfg = SimConfig::new(
            spec,
            TrafficConfig::new(cell.pattern, cell.rate, cell.seed),
            self.cycles,
        );
        cfg.warmup = self.warmup;
        if let Some(d) = self.buffer_depth {
            cfg.network.router.vc_depth = d;
            cfg.network.ring.buffer_depth = d;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub kind: TopologyKind,
    pub pes: usize,
    pub pattern: Pattern,
    pub rate: f64,
    pub seed: u64,
}

fn run_cell(spec: &SweepSpec, cell: &Cell) -> Row {
    let cfg = match spec.config(cell) {
        Ok(cfg) => cfg,
        Err(e) => {
            // Keep the cell's identity even when no topology could be built.
            let fallback = SimConfig::new(
                TopologySpec::ring_mesh(1, 1),
                TrafficConfig::new(cell.pattern, cell.rate, cell.seed),
                spec.cycles,
            );
            let mut row = Row::from_error(&fallback, &e);
            row.topology = cell.kind.to_string();
            row.pes = cell.pes;
            return row;
        }
    };
    let mut row = match run(&cfg) {
        Ok(stats) => Row::from_run(&cfg, &stats),
        Err(e) => Row::from_error(&cfg, &e.into()),
    };
    row.reference_throughput = reference::lookup(
        Metric::Throughput,
        cell.kind,
        cell.pes,
        Some(&row.pattern),
        false,
        cell.rate,
    );
    row
}

/// Runs every cell, in parallel, and returns rows in cell order followed by
/// the aggregate rows.
pub fn run_sweep(spec: &SweepSpec) -> Vec<Row> {
    let cells = spec.cells();
    let mut rows: Vec<Row> = cells.par_iter().map(|c| run_cell(spec, c)).collect();
    if spec.aggregate {
        let agg = aggregate(&rows);
        rows.extend(agg);
    }
    rows
}

/// Per (topology, size, seed): the mean over rates for each pattern, then
/// the mean over every pattern and rate labelled `mixed`.
pub fn aggregate(rows: &[Row]) -> Vec<Row> {
    let runs: Vec<&Row> = rows.iter().filter(|r| r.row_kind == RowKind::Run).collect();
    let mut groups: Vec<(String, usize, u64)> = Vec::new();
    for r in &runs {
        let key = (r.topology.clone(), r.pes, r.seed);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let mut out = Vec::new();
    for (topology, pes, seed) in groups {
        let kind: TopologyKind = topology.parse().expect("rows carry valid topology names");
        let members: Vec<&Row> = runs
            .iter()
            .copied()
            .filter(|r| r.topology == topology && r.pes == pes && r.seed == seed)
            .collect();
        let mut patterns: Vec<&str> = Vec::new();
        for r in &members {
            if !patterns.contains(&r.pattern.as_str()) {
                patterns.push(&r.pattern);
            }
        }
        for &p in &patterns {
            let subset: Vec<&Row> = members.iter().copied().filter(|r| r.pattern == p).collect();
            if subset.len() < 2 {
                continue;
            }
            if let Some(mut row) = Row::aggregate(&subset, p) {
                let averaged = reference::is_averaged_rate(row.injection_rate);
                row.reference_throughput = reference::lookup(
                    Metric::Throughput,
                    kind,
                    pes,
                    Some(p),
                    averaged,
                    row.injection_rate,
                );
                out.push(row);
            }
        }
        if patterns.len() > 1 {
            if let Some(mut row) = Row::aggregate(&members, "mixed") {
                let complete = patterns.len() == reference::PATTERNS.len()
                    && reference::is_averaged_rate(row.injection_rate);
                row.reference_latency_cycles = reference::lookup(
                    Metric::Latency,
                    kind,
                    pes,
                    None,
                    complete,
                    row.injection_rate,
                );
                out.push(row);
            }
        }
    }
    out
}
