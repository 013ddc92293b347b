//! Cycle-accurate simulator for a hierarchical ring-mesh network-on-chip and
//! a flat 2D-mesh baseline.
//!
//! A ring-mesh block is one eight-port router with four bidirectional
//! ringlets of four PEs each. Blocks are tiled in a 2D mesh with XY routing.

pub mod address;
pub mod arbiter;
pub mod baseline;
pub mod engine;
pub mod error;
pub mod morph;
pub mod ring;
pub mod router;
pub mod topology;
pub mod traffic;

pub use address::{Flit, FlitMeta, GlobalPeIndex, Header, NodeAddress, FLIT_BITS, MORPH_MARKER};
pub use engine::{
    measure_zero_load_latency, run, run_traced, LatencyMode, Network, NetworkParams, SimConfig,
    SimStats, Simulation, Trace, TraceLevel,
};
pub use error::{Error, Result};
pub use morph::{decode_morph, encode_morph, plan_region, LinkCommand, MorphPayload, RegionPlan};
pub use topology::{LinkState, TopologyKind, TopologySpec};
pub use traffic::{Pattern, TrafficConfig};
