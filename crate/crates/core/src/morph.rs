//! Topology reconfiguration through morph packets.
//!
//! A morph packet is a single control flit whose 32-bit payload is laid out
//! as
//!
//! ```text
//!  31 | 30 ........ 21 | 20 ............... 5 | 4 ... 0
//!  HL | region size    | link config (8 x 2b) | PE type
//! ```
//!
//! Link group `i` occupies LC bits `2i+1..2i` and addresses port `i` of the
//! target (router: N, S, E, W, R0..R3; ring switch: ccw side, cw side, PE,
//! router). A control flit is announced by a starting flit carrying
//! [`MORPH_MARKER`]; a data word equal to the marker is sent as two markers.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::address::{NodeAddress, MORPH_MARKER, RINGLETS_PER_BLOCK};
use crate::error::{Error, Result};
use crate::topology::{LinkState, TopologyKind, TopologySpec};

pub const LINK_GROUPS: usize = 8;
pub const MAX_REGION_SIZE: u16 = (1 << 10) - 1;
pub const MAX_PE_TYPE: u8 = (1 << 5) - 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HierarchyLevel {
    #[default]
    RingSwitch,
    Router,
}

/// Two-bit per-link command.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkCommand {
    #[default]
    NoChange,
    Active,
    Bypass,
    SwitchOff,
}

impl LinkCommand {
    pub fn bits(self) -> u32 {
        match self {
            LinkCommand::NoChange => 0b00,
            LinkCommand::Active => 0b01,
            LinkCommand::Bypass => 0b10,
            LinkCommand::SwitchOff => 0b11,
        }
    }

    pub fn from_bits(bits: u32) -> Self {
        match bits & 0b11 {
            0b00 => LinkCommand::NoChange,
            0b01 => LinkCommand::Active,
            0b10 => LinkCommand::Bypass,
            _ => LinkCommand::SwitchOff,
        }
    }
}

impl LinkState {
    /// Switch-off dominates bypass: a switched-off link only comes back with
    /// an explicit `Active`.
    pub fn apply(self, cmd: LinkCommand) -> LinkState {
        match (self, cmd) {
            (s, LinkCommand::NoChange) => s,
            (_, LinkCommand::Active) => LinkState::Active,
            (LinkState::SwitchedOff, LinkCommand::Bypass) => LinkState::SwitchedOff,
            (_, LinkCommand::Bypass) => LinkState::Bypass,
            (_, LinkCommand::SwitchOff) => LinkState::SwitchedOff,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MorphPayload {
    pub level: HierarchyLevel,
    /// Recorded as region metadata; not enforced by routing.
    pub region_size: u16,
    pub links: [LinkCommand; LINK_GROUPS],
    pub pe_type: u8,
}

impl MorphPayload {
    pub fn router(links: [LinkCommand; LINK_GROUPS]) -> Self {
        Self {
            level: HierarchyLevel::Router,
            links,
            ..Self::default()
        }
    }

    pub fn ring_switch(links: [LinkCommand; LINK_GROUPS]) -> Self {
        Self {
            level: HierarchyLevel::RingSwitch,
            links,
            ..Self::default()
        }
    }

    pub fn link_config_bits(&self) -> u32 {
        self.links
            .iter()
            .enumerate()
            .fold(0, |acc, (i, cmd)| acc | (cmd.bits() << (2 * i)))
    }

    pub fn with_link_config_bits(mut self, lc: u16) -> Self {
        for (i, slot) in self.links.iter_mut().enumerate() {
            *slot = LinkCommand::from_bits(u32::from(lc) >> (2 * i));
        }
        self
    }

    pub fn is_no_op(&self) -> bool {
        self.links.iter().all(|&c| c == LinkCommand::NoChange)
    }
}

pub fn encode_morph(m: &MorphPayload) -> Result<u32> {
    if m.region_size > MAX_REGION_SIZE {
        return Err(Error::Encoding(format!(
            "region size {} exceeds 10 bits",
            m.region_size
        )));
    }
    if m.pe_type > MAX_PE_TYPE {
        return Err(Error::Encoding(format!(
            "PE type {} exceeds 5 bits",
            m.pe_type
        )));
    }
    let hl = match m.level {
        HierarchyLevel::RingSwitch => 0,
        HierarchyLevel::Router => 1,
    };
    let word = (hl << 31)
        | (u32::from(m.region_size) << 21)
        | (m.link_config_bits() << 5)
        | u32::from(m.pe_type);
    if word == MORPH_MARKER {
        return Err(Error::Encoding(
            "an all-ones morph payload must clear the PE-type LSB".into(),
        ));
    }
    Ok(word)
}

pub fn decode_morph(word: u32) -> Result<MorphPayload> {
    if word == MORPH_MARKER {
        return Err(Error::Protocol(
            "0xFFFFFFFF is the starting-flit marker, not a configuration".into(),
        ));
    }
    let level = if word >> 31 == 1 {
        HierarchyLevel::Router
    } else {
        HierarchyLevel::RingSwitch
    };
    Ok(MorphPayload {
        level,
        region_size: ((word >> 21) & 0x3FF) as u16,
        links: [LinkCommand::NoChange; LINK_GROUPS],
        pe_type: (word & 0x1F) as u8,
    }
    .with_link_config_bits(((word >> 5) & 0xFFFF) as u16))
}

/// A payload word before escaping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogicalWord {
    Data(u32),
    Config(u32),
}

pub fn escape_encode(words: &[LogicalWord]) -> Result<Vec<u32>> {
    let mut wire = Vec::with_capacity(words.len());
    for w in words {
        match *w {
            LogicalWord::Config(MORPH_MARKER) => {
                return Err(Error::Protocol(
                    "configuration payload equals the marker".into(),
                ))
            }
            LogicalWord::Config(c) => wire.extend([MORPH_MARKER, c]),
            LogicalWord::Data(MORPH_MARKER) => wire.extend([MORPH_MARKER, MORPH_MARKER]),
            LogicalWord::Data(d) => wire.push(d),
        }
    }
    Ok(wire)
}

/// Streaming decoder for the starting-flit protocol.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EscapeDecoder {
    pending_marker: bool,
}

impl EscapeDecoder {
    pub fn push(&mut self, word: u32) -> Option<LogicalWord> {
        if std::mem::take(&mut self.pending_marker) {
            return Some(if word == MORPH_MARKER {
                LogicalWord::Data(MORPH_MARKER)
            } else {
                LogicalWord::Config(word)
            });
        }
        if word == MORPH_MARKER {
            self.pending_marker = true;
            None
        } else {
            Some(LogicalWord::Data(word))
        }
    }

    pub fn is_idle(&self) -> bool {
        !self.pending_marker
    }
}

pub fn escape_decode(wire: &[u32]) -> Result<Vec<LogicalWord>> {
    let mut dec = EscapeDecoder::default();
    let out: Vec<LogicalWord> = wire.iter().filter_map(|&w| dec.push(w)).collect();
    if !dec.is_idle() {
        return Err(Error::Protocol(
            "stream ends with a dangling starting flit".into(),
        ));
    }
    Ok(out)
}

/// Applies the first `states.len()` link groups. Groups past the target's
/// port count must be `NoChange`, and `Bypass` is only legal on ports for
/// which `can_bypass` holds. Nothing is modified when validation fails.
pub fn apply_link_commands(
    states: &mut [LinkState],
    links: &[LinkCommand; LINK_GROUPS],
    can_bypass: impl Fn(usize) -> bool,
) -> Result<()> {
    if let Some(i) = (states.len()..LINK_GROUPS).find(|&i| links[i] != LinkCommand::NoChange) {
        return Err(Error::Protocol(format!(
            "link group {i} addresses a port the target does not have ({} ports)",
            states.len()
        )));
    }
    if let Some(i) = (0..states.len()).find(|&i| links[i] == LinkCommand::Bypass && !can_bypass(i))
    {
        return Err(Error::Protocol(format!(
            "port {i} has no opposite port to bypass to"
        )));
    }
    for (state, &cmd) in states.iter_mut().zip(links) {
        *state = state.apply(cmd);
    }
    Ok(())
}

/// Region bookkeeping recorded by a morph target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionTag {
    pub region_size: u16,
    pub pe_type: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockGrant {
    pub block: (u8, u8),
    pub ringlets: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionPlan {
    pub anchor: (u8, u8),
    pub requested: usize,
    pub blocks: Vec<BlockGrant>,
    pub morphs: Vec<(NodeAddress, MorphPayload)>,
}

impl RegionPlan {
    pub fn pe_count(&self) -> usize {
        self.blocks.iter().map(|b| b.ringlets.len() * 4).sum()
    }

    pub fn block_set(&self) -> BTreeSet<(u8, u8)> {
        self.blocks.iter().map(|b| b.block).collect()
    }
}

/// Greedy ringlet-granular region allocation growing outward from `anchor`.
/// Whole blocks are taken first; the remainder comes from the next closest
/// block, whose unused ringlet ports are switched off by one router morph.
pub fn plan_region(
    spec: &TopologySpec,
    requested: usize,
    anchor: (u8, u8),
    pe_type: u8,
) -> Result<RegionPlan> {
    if spec.kind != TopologyKind::RingMesh {
        return Err(Error::Planning(
            "regions are carved from ring-mesh blocks".into(),
        ));
    }
    if anchor.0 as usize >= spec.cols || anchor.1 as usize >= spec.rows {
        return Err(Error::Planning(format!(
            "anchor block {anchor:?} is outside the mesh"
        )));
    }
    if requested == 0 || !requested.is_multiple_of(4) {
        return Err(Error::Planning(format!(
            "{requested} PEs is not a whole number of ringlets"
        )));
    }
    if requested > spec.pe_count() {
        return Err(Error::Planning(format!(
            "{requested} PEs requested but only {} exist",
            spec.pe_count()
        )));
    }
    if pe_type > MAX_PE_TYPE {
        return Err(Error::Planning(format!("PE type {pe_type} exceeds 5 bits")));
    }

    let mut blocks: Vec<(u8, u8)> = (0..spec.rows as u8)
        .flat_map(|y| (0..spec.cols as u8).map(move |x| (x, y)))
        .collect();
    blocks.sort_by_key(|&(x, y)| {
        (
            x.abs_diff(anchor.0) as u32 + y.abs_diff(anchor.1) as u32,
            y,
            x,
        )
    });

    let full = requested / 16;
    let partial = (requested % 16) / 4;
    let mut plan = RegionPlan {
        anchor,
        requested,
        blocks: Vec::new(),
        morphs: Vec::new(),
    };
    for &block in blocks.iter().take(full) {
        plan.blocks.push(BlockGrant {
            block,
            ringlets: (0..RINGLETS_PER_BLOCK as u8).collect(),
        });
    }
    if partial > 0 {
        let block = blocks[full];
        plan.blocks.push(BlockGrant {
            block,
            ringlets: (0..partial as u8).collect(),
        });
        let mut links = [LinkCommand::NoChange; LINK_GROUPS];
        for r in partial..RINGLETS_PER_BLOCK {
            links[4 + r] = LinkCommand::SwitchOff;
        }
        let region_size = requested.min(MAX_REGION_SIZE as usize) as u16;
        plan.morphs.push((
            NodeAddress::new(block.0, block.1, 0, 0),
            MorphPayload {
                level: HierarchyLevel::Router,
                region_size,
                links,
                pe_type,
            },
        ));
    }
    Ok(plan)
}
