//! Single-flit packet format and hierarchical addressing.
//!
//! A flit is 43 bits on the wire: an 11-bit header followed by a 32-bit
//! payload. The header layout, most significant bit first, is
//!
//! ```text
//!  10  9  8 | 7  6  5 | 4  3 | 2  1 | 0
//!  router_x | router_y | ring | pe   | vc
//! ```
//!
//! Simulator bookkeeping (packet id, timestamps, source) travels next to the
//! flit in [`FlitMeta`] and never takes part in routing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADER_BITS: u32 = 11;
pub const PAYLOAD_BITS: u32 = 32;
pub const FLIT_BITS: u32 = HEADER_BITS + PAYLOAD_BITS;

/// Payload value that announces a control flit (or escapes a literal data word).
pub const MORPH_MARKER: u32 = 0xFFFF_FFFF;

pub const RINGLETS_PER_BLOCK: usize = 4;
pub const PES_PER_RINGLET: usize = 4;
pub const PES_PER_BLOCK: usize = RINGLETS_PER_BLOCK * PES_PER_RINGLET;

const HEADER_MASK: u16 = (1 << HEADER_BITS) - 1;

/// Destination of a flit: mesh router, ringlet within the block, PE within the ringlet.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct NodeAddress {
    pub router_x: u8,
    pub router_y: u8,
    pub ringlet: u8,
    pub pe: u8,
}

impl NodeAddress {
    pub const fn new(router_x: u8, router_y: u8, ringlet: u8, pe: u8) -> Self {
        Self {
            router_x,
            router_y,
            ringlet,
            pe,
        }
    }

    /// Router coordinate of the block that owns this node.
    pub const fn block(&self) -> (u8, u8) {
        (self.router_x, self.router_y)
    }

    pub const fn same_ringlet(&self, other: &NodeAddress) -> bool {
        self.router_x == other.router_x
            && self.router_y == other.router_y
            && self.ringlet == other.ringlet
    }
}

impl fmt::Display for NodeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{}.{}.{}",
            self.router_x, self.router_y, self.ringlet, self.pe
        )
    }
}

impl FromStr for NodeAddress {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('.').collect();
        if parts.len() != 4 {
            return Err(Error::Address(format!("expected x.y.r.p, got {s:?}")));
        }
        let mut fields = [0u8; 4];
        for (slot, part) in fields.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| Error::Address(format!("bad address component {part:?} in {s:?}")))?;
        }
        if fields[2] as usize >= RINGLETS_PER_BLOCK || fields[3] as usize >= PES_PER_RINGLET {
            return Err(Error::Address(format!("ringlet/pe out of range in {s:?}")));
        }
        Ok(NodeAddress::new(fields[0], fields[1], fields[2], fields[3]))
    }
}

/// Routing header: destination plus the virtual-channel select bit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Header {
    pub dest: NodeAddress,
    pub vc: u8,
}

impl Header {
    pub const fn new(dest: NodeAddress, vc: u8) -> Self {
        Self { dest, vc }
    }

    /// Packs the header into its 11-bit wire form.
    pub fn encode(&self) -> Result<u16> {
        let d = &self.dest;
        if d.router_x > 7 || d.router_y > 7 {
            return Err(Error::Encoding(format!(
                "router coordinate ({}, {}) does not fit in 3 bits",
                d.router_x, d.router_y
            )));
        }
        if d.ringlet > 3 || d.pe > 3 {
            return Err(Error::Encoding(format!(
                "ringlet {} / pe {} does not fit in 2 bits",
                d.ringlet, d.pe
            )));
        }
        if self.vc > 1 {
            return Err(Error::Encoding(format!(
                "vc select {} is not a bit",
                self.vc
            )));
        }
        Ok((u16::from(d.router_x) << 8)
            | (u16::from(d.router_y) << 5)
            | (u16::from(d.ringlet) << 3)
            | (u16::from(d.pe) << 1)
            | u16::from(self.vc))
    }

    /// Inverse of [`Header::encode`]. Whether the coordinates exist in a given
    /// topology is checked at routing time, not here.
    pub fn decode(bits: u16) -> Result<Header> {
        if bits & !HEADER_MASK != 0 {
            return Err(Error::Encoding(format!("{bits:#x} is wider than 11 bits")));
        }
        Ok(Header {
            dest: NodeAddress {
                router_x: ((bits >> 8) & 0x7) as u8,
                router_y: ((bits >> 5) & 0x7) as u8,
                ringlet: ((bits >> 3) & 0x3) as u8,
                pe: ((bits >> 1) & 0x3) as u8,
            },
            vc: (bits & 1) as u8,
        })
    }
}

/// Simulator-only bookkeeping carried alongside a flit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlitMeta {
    pub packet_id: u64,
    /// Cycle the flit entered its source buffer.
    pub inject_cycle: u64,
    /// Cycle the flit left its source buffer; `u64::MAX` until the first hop.
    pub depart_cycle: u64,
    pub source: NodeAddress,
    pub hops: u16,
    /// Part of a control (morph) sequence rather than application data.
    pub control: bool,
}

impl FlitMeta {
    pub fn new(packet_id: u64, inject_cycle: u64, source: NodeAddress) -> Self {
        Self {
            packet_id,
            inject_cycle,
            depart_cycle: u64::MAX,
            source,
            hops: 0,
            control: false,
        }
    }
}

/// The atomic network unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flit {
    pub header: Header,
    pub payload: u32,
    pub meta: FlitMeta,
}

impl Flit {
    pub fn new(header: Header, payload: u32, meta: FlitMeta) -> Self {
        Self {
            header,
            payload,
            meta,
        }
    }

    pub fn dest(&self) -> &NodeAddress {
        &self.header.dest
    }

    pub fn is_morph_marker(&self) -> bool {
        self.payload == MORPH_MARKER
    }

    /// The 43-bit wire image: header in bits 42..32, payload in bits 31..0.
    pub fn wire(&self) -> Result<u64> {
        Ok((u64::from(self.header.encode()?) << PAYLOAD_BITS) | u64::from(self.payload))
    }

    /// Rebuilds header and payload from a wire image; metadata is left blank.
    pub fn from_wire(bits: u64) -> Result<(Header, u32)> {
        if bits >> FLIT_BITS != 0 {
            return Err(Error::Encoding(format!("{bits:#x} is wider than 43 bits")));
        }
        let header = Header::decode((bits >> PAYLOAD_BITS) as u16)?;
        Ok((header, bits as u32))
    }
}

/// Dense index of a PE, used by traffic patterns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GlobalPeIndex(pub u32);

impl fmt::Display for GlobalPeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Index of a ring-mesh PE in a `rows x cols` router grid.
pub fn address_to_index(a: &NodeAddress, rows: usize, cols: usize) -> Result<GlobalPeIndex> {
    if a.router_x as usize >= cols
        || a.router_y as usize >= rows
        || a.ringlet as usize >= RINGLETS_PER_BLOCK
        || a.pe as usize >= PES_PER_RINGLET
    {
        return Err(Error::Address(format!(
            "{a} is outside a {rows}x{cols} ring-mesh"
        )));
    }
    let block = a.router_y as usize * cols + a.router_x as usize;
    let index = (block * RINGLETS_PER_BLOCK + a.ringlet as usize) * PES_PER_RINGLET + a.pe as usize;
    Ok(GlobalPeIndex(index as u32))
}

/// Inverse of [`address_to_index`].
pub fn index_to_address(index: GlobalPeIndex, rows: usize, cols: usize) -> Result<NodeAddress> {
    let i = index.0 as usize;
    if i >= rows * cols * PES_PER_BLOCK {
        return Err(Error::Address(format!(
            "index {i} is outside a {rows}x{cols} ring-mesh"
        )));
    }
    let pe = i % PES_PER_RINGLET;
    let ringlet = (i / PES_PER_RINGLET) % RINGLETS_PER_BLOCK;
    let block = i / PES_PER_BLOCK;
    Ok(NodeAddress::new(
        (block % cols) as u8,
        (block / cols) as u8,
        ringlet as u8,
        pe as u8,
    ))
}
