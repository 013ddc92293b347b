//! Flat 2D-mesh baseline: one five-port router per PE, XY routing.

use crate::address::{Header, NodeAddress};
use crate::engine::{run, SimConfig, SimStats};
use crate::error::Result;
use crate::router::{route_compute, Port};
use crate::topology::{TopologyKind, TopologySpec};
use crate::traffic::TrafficConfig;

/// Output port chosen by the flat-mesh router at `here`.
pub fn flat_route_compute(h: &Header, here: (u8, u8)) -> Port {
    route_compute(h, here, TopologyKind::FlatMesh)
}

/// Address of flat-mesh node `(x, y)`.
pub fn flat_address(x: u8, y: u8) -> NodeAddress {
    NodeAddress::new(x, y, 0, 0)
}

/// Runs the baseline with the same traffic parameters as a ring-mesh run.
pub fn run_flat(pes: usize, traffic: TrafficConfig, cycles: u64) -> Result<SimStats> {
    run(&flat_config(pes, traffic, cycles)?)
}

/// Flat mesh as a configuration of the general simulator.
pub fn flat_config(pes: usize, traffic: TrafficConfig, cycles: u64) -> Result<SimConfig> {
    let spec = TopologySpec::for_pe_count(TopologyKind::FlatMesh, pes)?;
    Ok(SimConfig::new(spec, traffic, cycles))
}
