//! Topology parameters and analytic metrics.
//!
//! A ring-mesh is a `rows x cols` grid of 8-port mesh routers. Every router
//! anchors a block of four ringlets, and every ringlet is a bidirectional
//! ring of four ring switches with PE 0 acting as master (the only switch
//! wired to the router). The flat mesh is the conventional baseline with one
//! PE per 5-port router.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::address::{
    address_to_index, index_to_address, GlobalPeIndex, NodeAddress, PES_PER_BLOCK, PES_PER_RINGLET,
    RINGLETS_PER_BLOCK,
};
use crate::error::{Error, Result};

pub const DEFAULT_LINK_BITS: u32 = 43;
/// Header coordinates are 3 bits wide.
pub const MAX_RING_MESH_DIM: usize = 8;
pub const MAX_FLAT_MESH_DIM: usize = 64;

pub const RING_MESH_ROUTER_PORTS: usize = 8;
pub const FLAT_ROUTER_PORTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    RingMesh,
    FlatMesh,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyKind::RingMesh => "ringmesh",
            TopologyKind::FlatMesh => "flat",
        })
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ringmesh" | "ring-mesh" | "ring_mesh" => Ok(TopologyKind::RingMesh),
            "flat" | "flatmesh" | "mesh" => Ok(TopologyKind::FlatMesh),
            other => Err(Error::Config(format!("unknown topology {other:?}"))),
        }
    }
}

/// State of one router or ring-switch port.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkState {
    #[default]
    Active,
    /// Incoming traffic is wired straight to the opposite output.
    Bypass,
    /// Input and output logic disabled; traffic entering is dropped.
    SwitchedOff,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    /// Routers along Y.
    pub rows: usize,
    /// Routers along X.
    pub cols: usize,
    /// Bits per cycle per link.
    pub link_bandwidth_bits: u32,
}

/// Bisection bandwidth read off the closed-form expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bisection {
    pub bits_per_cycle: u64,
    /// The formula collapses to zero for a single-router mesh.
    pub degenerate: bool,
}

impl TopologySpec {
    pub fn ring_mesh(rows: usize, cols: usize) -> Self {
        Self {
            kind: TopologyKind::RingMesh,
            rows,
            cols,
            link_bandwidth_bits: DEFAULT_LINK_BITS,
        }
    }

    pub fn flat_mesh(rows: usize, cols: usize) -> Self {
        Self {
            kind: TopologyKind::FlatMesh,
            rows,
            cols,
            link_bandwidth_bits: DEFAULT_LINK_BITS,
        }
    }

    /// Picks mesh dimensions for a PE count. Ring-mesh counts must be 16
    /// times a power of two; both kinds use the most square `rows <= cols`
    /// factorization.
    pub fn for_pe_count(kind: TopologyKind, pes: usize) -> Result<Self> {
        let routers = match kind {
            TopologyKind::RingMesh => {
                if pes == 0
                    || !pes.is_multiple_of(PES_PER_BLOCK)
                    || !(pes / PES_PER_BLOCK).is_power_of_two()
                {
                    return Err(Error::Config(format!(
                        "{pes} PEs is not 16 x a power of two blocks"
                    )));
                }
                pes / PES_PER_BLOCK
            }
            TopologyKind::FlatMesh => {
                if pes < 2 {
                    return Err(Error::Config(format!("{pes} PEs is too small for a mesh")));
                }
                pes
            }
        };
        let mut rows = (routers as f64).sqrt().floor() as usize;
        while routers % rows != 0 {
            rows -= 1;
        }
        let spec = Self {
            kind,
            rows,
            cols: routers / rows,
            link_bandwidth_bits: DEFAULT_LINK_BITS,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let cap = match self.kind {
            TopologyKind::RingMesh => MAX_RING_MESH_DIM,
            TopologyKind::FlatMesh => MAX_FLAT_MESH_DIM,
        };
        if self.rows == 0 || self.cols == 0 || self.rows > cap || self.cols > cap {
            return Err(Error::Config(format!(
                "{} of {}x{} routers is outside 1..={cap} per dimension",
                self.kind, self.rows, self.cols
            )));
        }
        if self.kind == TopologyKind::FlatMesh && self.rows * self.cols < 2 {
            return Err(Error::Config(
                "a flat mesh needs at least two routers".into(),
            ));
        }
        if self.link_bandwidth_bits == 0 {
            return Err(Error::Config("link bandwidth must be positive".into()));
        }
        Ok(())
    }

    pub fn router_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn ringlet_count(&self) -> usize {
        match self.kind {
            TopologyKind::RingMesh => self.router_count() * RINGLETS_PER_BLOCK,
            TopologyKind::FlatMesh => 0,
        }
    }

    pub fn pe_count(&self) -> usize {
        match self.kind {
            TopologyKind::RingMesh => self.router_count() * PES_PER_BLOCK,
            TopologyKind::FlatMesh => self.router_count(),
        }
    }

    pub fn ports_per_router(&self) -> usize {
        match self.kind {
            TopologyKind::RingMesh => RING_MESH_ROUTER_PORTS,
            TopologyKind::FlatMesh => FLAT_ROUTER_PORTS,
        }
    }

    /// Worst-case shortest path in links. For the ring-mesh this is
    /// `(rows - 1) + (cols - 1) + 6`: two ringlet traversals of three links
    /// each (two ring hops plus the master-to-router link).
    pub fn diameter(&self) -> u32 {
        let mesh = (self.rows - 1 + self.cols - 1) as u32;
        match self.kind {
            TopologyKind::RingMesh => mesh + 6,
            TopologyKind::FlatMesh => mesh,
        }
    }

    /// `min(rows - 1, cols - 1) * b_l`, with the per-dimension terms read as
    /// link-traversal counts exactly like the diameter expression.
    pub fn bisection_bandwidth(&self) -> Bisection {
        let hops = (self.rows - 1).min(self.cols - 1) as u64;
        Bisection {
            bits_per_cycle: hops * u64::from(self.link_bandwidth_bits),
            degenerate: hops == 0,
        }
    }

    /// Conventional bisection: links cut by the narrowest halving cut.
    pub fn textbook_bisection_bits(&self) -> u64 {
        let mut best: Option<usize> = None;
        if self.cols >= 2 {
            best = Some(self.rows);
        }
        if self.rows >= 2 {
            best = Some(best.map_or(self.cols, |b| b.min(self.cols)));
        }
        best.unwrap_or(0) as u64 * u64::from(self.link_bandwidth_bits)
    }

    /// Half the crossbar bandwidth of one router (one flit per port per cycle).
    pub fn router_bisection_bits(&self) -> u64 {
        (self.ports_per_router() as u64 * u64::from(self.link_bandwidth_bits)) / 2
    }

    pub fn contains(&self, a: &NodeAddress) -> bool {
        let in_mesh = (a.router_x as usize) < self.cols && (a.router_y as usize) < self.rows;
        match self.kind {
            TopologyKind::RingMesh => {
                in_mesh
                    && (a.ringlet as usize) < RINGLETS_PER_BLOCK
                    && (a.pe as usize) < PES_PER_RINGLET
            }
            TopologyKind::FlatMesh => in_mesh && a.ringlet == 0 && a.pe == 0,
        }
    }

    pub fn check(&self, a: &NodeAddress) -> Result<()> {
        if self.contains(a) {
            Ok(())
        } else {
            Err(Error::Address(format!(
                "{a} is not a node of the {}x{} {}",
                self.rows, self.cols, self.kind
            )))
        }
    }

    pub fn address_to_index(&self, a: &NodeAddress) -> Result<GlobalPeIndex> {
        match self.kind {
            TopologyKind::RingMesh => address_to_index(a, self.rows, self.cols),
            TopologyKind::FlatMesh => {
                self.check(a)?;
                Ok(GlobalPeIndex(
                    (a.router_y as usize * self.cols + a.router_x as usize) as u32,
                ))
            }
        }
    }

    pub fn index_to_address(&self, index: GlobalPeIndex) -> Result<NodeAddress> {
        match self.kind {
            TopologyKind::RingMesh => index_to_address(index, self.rows, self.cols),
            TopologyKind::FlatMesh => {
                let i = index.0 as usize;
                if i >= self.pe_count() {
                    return Err(Error::Address(format!("index {i} outside flat mesh")));
                }
                Ok(NodeAddress::new(
                    (i % self.cols) as u8,
                    (i / self.cols) as u8,
                    0,
                    0,
                ))
            }
        }
    }

    /// Minimal link count between two distinct nodes.
    pub fn zero_load_hops(&self, src: &NodeAddress, dst: &NodeAddress) -> Result<u32> {
        self.check(src)?;
        self.check(dst)?;
        if src == dst {
            return Err(Error::Address(format!(
                "{src} is both source and destination"
            )));
        }
        let mesh =
            src.router_x.abs_diff(dst.router_x) as u32 + src.router_y.abs_diff(dst.router_y) as u32;
        Ok(match self.kind {
            TopologyKind::FlatMesh => mesh,
            TopologyKind::RingMesh if src.same_ringlet(dst) => ring_distance(src.pe, dst.pe),
            TopologyKind::RingMesh => {
                ring_distance(src.pe, 0) + 1 + mesh + 1 + ring_distance(0, dst.pe)
            }
        })
    }
}

/// Shorter-direction distance on a four-node bidirectional ring.
pub fn ring_distance(a: u8, b: u8) -> u32 {
    let cw = (b as u32 + PES_PER_RINGLET as u32 - a as u32) % PES_PER_RINGLET as u32;
    cw.min(PES_PER_RINGLET as u32 - cw)
}
