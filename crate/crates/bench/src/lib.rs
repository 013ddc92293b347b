//! Shared scenarios for the criterion benchmarks.

use ringmesh_core::{Pattern, SimConfig, TopologyKind, TopologySpec, TrafficConfig};

/// A fixed-seed run of `cycles` cycles on `pes` PEs.
pub fn scenario(
    kind: TopologyKind,
    pes: usize,
    pattern: Pattern,
    rate: f64,
    cycles: u64,
) -> SimConfig {
    let spec = TopologySpec::for_pe_count(kind, pes).expect("benchmark sizes are valid");
    SimConfig::new(spec, TrafficConfig::new(pattern, rate, 1), cycles)
}
