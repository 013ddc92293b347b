//! Published RTL measurements of the ring-mesh and a flat mesh, used as trend
//! anchors. Results are compared as ratios, never asserted.

use ringmesh_core::TopologyKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Throughput,
    Latency,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Throughput => "throughput_pkts_per_cycle",
            Metric::Latency => "avg_latency_cycles",
        }
    }
}

/// Pattern `None` means the mean over all three patterns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reference {
    pub metric: Metric,
    pub kind: TopologyKind,
    pub pes: usize,
    pub pattern: Option<&'static str>,
    /// `None` means the mean over rates 0.25, 0.5, 0.75 and 1.0.
    pub rate: Option<f64>,
    pub value: f64,
}

const fn thr(pes: usize, pattern: &'static str, rate: Option<f64>, value: f64) -> Reference {
    Reference {
        metric: Metric::Throughput,
        kind: TopologyKind::RingMesh,
        pes,
        pattern: Some(pattern),
        rate,
        value,
    }
}

const fn lat(kind: TopologyKind, pes: usize, value: f64) -> Reference {
    Reference {
        metric: Metric::Latency,
        kind,
        pes,
        pattern: None,
        rate: None,
        value,
    }
}

pub const REFERENCES: &[Reference] = &[
    thr(16, "uniform", Some(1.0), 12.0),
    thr(32, "uniform", Some(1.0), 22.0),
    thr(16, "transpose", None, 9.8),
    thr(32, "transpose", None, 17.13),
    thr(128, "transpose", None, 69.25),
    thr(256, "transpose", None, 147.7),
    thr(512, "transpose", None, 288.0),
    thr(1024, "transpose", None, 570.0),
    lat(TopologyKind::RingMesh, 128, 100.0),
    lat(TopologyKind::RingMesh, 1024, 170.0),
    lat(TopologyKind::FlatMesh, 128, 156.0),
    lat(TopologyKind::FlatMesh, 1024, 377.0),
];

/// The injection rates whose mean forms the rate-averaged curves.
pub const AVERAGED_RATES: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

pub const PATTERNS: [&str; 3] = ["uniform", "bitrev", "transpose"];

/// True if `rate` is the mean of [`AVERAGED_RATES`].
pub fn is_averaged_rate(rate: f64) -> bool {
    let mean = AVERAGED_RATES.iter().sum::<f64>() / AVERAGED_RATES.len() as f64;
    (rate - mean).abs() < 1e-9
}

pub fn lookup(
    metric: Metric,
    kind: TopologyKind,
    pes: usize,
    pattern: Option<&str>,
    averaged: bool,
    rate: f64,
) -> Option<f64> {
    REFERENCES
        .iter()
        .find(|r| {
            r.metric == metric
                && r.kind == kind
                && r.pes == pes
                && r.pattern == pattern
                && match r.rate {
                    None => averaged,
                    Some(x) => !averaged && (x - rate).abs() < 1e-9,
                }
        })
        .map(|r| r.value)
}
