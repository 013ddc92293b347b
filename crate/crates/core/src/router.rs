//! Cycle-level model of the mesh router.
//!
//! The ring-mesh router has eight ports (N, S, E, W and one per ringlet), the
//! flat-mesh baseline router five (N, S, E, W, Local). Both share the same
//! microarchitecture: two VC FIFOs per input, a single output register per
//! output (modelled as the outgoing link), XY dimension-order routing and a
//! separable switch allocator (VC round-robin per input, weighted round-robin
//! per output).
//!
//! A flit that arrives into an empty VC speculates: if it wins allocation in
//! its arrival cycle it is on the output link at the end of that cycle. Any
//! other flit runs the full RF/VCA/SA/ST pipeline and becomes eligible three
//! cycles after arrival.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::address::{Flit, Header};
use crate::arbiter::WeightedRoundRobin;
use crate::error::{Error, Result};
use crate::morph::{apply_link_commands, decode_morph, HierarchyLevel, MorphPayload, RegionTag};
use crate::topology::{LinkState, TopologyKind, FLAT_ROUTER_PORTS, RING_MESH_ROUTER_PORTS};

pub const MAX_ROUTER_PORTS: usize = RING_MESH_ROUTER_PORTS;
pub const VCS_PER_PORT: usize = 2;
/// Cycles from arrival to output for a flit that misses speculation.
pub const SLOW_PATH_CYCLES: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Port {
    North,
    South,
    East,
    West,
    Ringlet(u8),
    /// Flat-mesh PE port.
    Local,
}

impl Port {
    pub fn index(self) -> usize {
        match self {
            Port::North => 0,
            Port::South => 1,
            Port::East => 2,
            Port::West => 3,
            Port::Ringlet(r) => 4 + r as usize,
            Port::Local => 4,
        }
    }

    pub fn from_index(kind: TopologyKind, i: usize) -> Option<Port> {
        Some(match (kind, i) {
            (_, 0) => Port::North,
            (_, 1) => Port::South,
            (_, 2) => Port::East,
            (_, 3) => Port::West,
            (TopologyKind::RingMesh, 4..=7) => Port::Ringlet((i - 4) as u8),
            (TopologyKind::FlatMesh, 4) => Port::Local,
            _ => return None,
        })
    }

    /// Geometrically opposite port, used by bypass. Ringlets are numbered
    /// from top-left (0) to bottom-right (3).
    pub fn opposite(self) -> Option<Port> {
        Some(match self {
            Port::North => Port::South,
            Port::South => Port::North,
            Port::East => Port::West,
            Port::West => Port::East,
            Port::Ringlet(r) => Port::Ringlet(3 - r),
            Port::Local => return None,
        })
    }
}

/// XY dimension-order routing: correct X first, then Y (Y grows southward),
/// then leave through the destination's ringlet (or local) port.
pub fn route_compute(h: &Header, here: (u8, u8), kind: TopologyKind) -> Port {
    let d = &h.dest;
    if d.router_x > here.0 {
        Port::East
    } else if d.router_x < here.0 {
        Port::West
    } else if d.router_y < here.1 {
        Port::North
    } else if d.router_y > here.1 {
        Port::South
    } else {
        match kind {
            TopologyKind::RingMesh => Port::Ringlet(d.ringlet),
            TopologyKind::FlatMesh => Port::Local,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouterParams {
    /// Flits per VC buffer.
    pub vc_depth: usize,
    /// Switch-allocator weight of ringlet-facing inputs.
    pub ring_weight: u32,
    /// Switch-allocator weight of mesh-facing (and flat local) inputs.
    pub mesh_weight: u32,
}

impl Default for RouterParams {
    fn default() -> Self {
        Self {
            vc_depth: 4,
            ring_weight: 2,
            mesh_weight: 1,
        }
    }
}

/// Link-level acknowledgement for a flit presented at an input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Accept {
    Yes,
    No,
    /// Accepted iff the given output port can take a flit this cycle.
    IfWritable(usize),
}

/// Per-cycle port signals exchanged with the network.
#[derive(Clone, Debug)]
pub struct RouterIo {
    /// Acknowledged flits presented at each input.
    pub incoming: [Option<Flit>; MAX_ROUTER_PORTS],
    /// Whether each output can be written this cycle.
    pub writable: [bool; MAX_ROUTER_PORTS],
    pub outgoing: [Option<Flit>; MAX_ROUTER_PORTS],
    pub dropped: u32,
    /// Control flits absorbed by this router as a morph target.
    pub consumed: u32,
}

impl Default for RouterIo {
    fn default() -> Self {
        Self {
            incoming: [None; MAX_ROUTER_PORTS],
            writable: [false; MAX_ROUTER_PORTS],
            outgoing: [None; MAX_ROUTER_PORTS],
            dropped: 0,
            consumed: 0,
        }
    }
}

impl RouterIo {
    pub fn clear(&mut self) {
        *self = Self::default();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InjectOutcome {
    Accepted,
    Full,
    Dropped,
}

#[derive(Clone, Debug)]
struct Buffered {
    flit: Flit,
    ready_at: u64,
    speculative: bool,
}

#[derive(Clone, Debug, Default)]
struct InputPort {
    vcs: [VecDeque<Buffered>; VCS_PER_PORT],
    vc_pointer: usize,
}

#[derive(Clone, Debug)]
struct OutputPort {
    arbiter: WeightedRoundRobin,
    /// Holds the output for the flit following a starting flit.
    lock: Option<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct Router {
    coord: (u8, u8),
    kind: TopologyKind,
    params: RouterParams,
    inputs: Vec<InputPort>,
    outputs: Vec<OutputPort>,
    link_states: Vec<LinkState>,
    pending_morphs: Vec<MorphPayload>,
    region: Option<RegionTag>,
    morph_errors: u64,
}

impl Router {
    pub fn new(coord: (u8, u8), kind: TopologyKind, params: RouterParams) -> Self {
        assert!(params.vc_depth > 0, "VC depth must be positive");
        let ports = match kind {
            TopologyKind::RingMesh => RING_MESH_ROUTER_PORTS,
            TopologyKind::FlatMesh => FLAT_ROUTER_PORTS,
        };
        let weights: Vec<u32> = (0..ports)
            .map(|p| match Port::from_index(kind, p) {
                Some(Port::Ringlet(_)) => params.ring_weight,
                _ => params.mesh_weight,
            })
            .collect();
        Self {
            coord,
            kind,
            params,
            inputs: vec![InputPort::default(); ports],
            outputs: vec![
                OutputPort {
                    arbiter: WeightedRoundRobin::new(weights),
                    lock: None,
                };
                ports
            ],
            link_states: vec![LinkState::Active; ports],
            pending_morphs: Vec::new(),
            region: None,
            morph_errors: 0,
        }
    }

    pub fn coord(&self) -> (u8, u8) {
        self.coord
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn ports(&self) -> usize {
        self.inputs.len()
    }

    pub fn params(&self) -> &RouterParams {
        &self.params
    }

    pub fn route(&self, h: &Header) -> Port {
        route_compute(h, self.coord, self.kind)
    }

    pub fn link_state(&self, port: usize) -> LinkState {
        self.link_states[port]
    }

    pub fn link_states(&self) -> &[LinkState] {
        &self.link_states
    }

    pub fn set_link_state(&mut self, port: usize, state: LinkState) {
        self.link_states[port] = state;
    }

    pub fn region(&self) -> Option<RegionTag> {
        self.region
    }

    pub fn morph_errors(&self) -> u64 {
        self.morph_errors
    }

    pub fn vc_occupancy(&self, port: usize, vc: usize) -> usize {
        self.inputs[port].vcs[vc].len()
    }

    pub fn buffered(&self) -> usize {
        self.inputs
            .iter()
            .map(|i| i.vcs.iter().map(VecDeque::len).sum::<usize>())
            .sum()
    }

    pub fn for_each_flit(&self, mut f: impl FnMut(&Flit)) {
        for input in &self.inputs {
            for vc in &input.vcs {
                vc.iter().for_each(|b| f(&b.flit));
            }
        }
    }

    fn opposite_index(&self, port: usize) -> Option<usize> {
        Port::from_index(self.kind, port)
            .and_then(Port::opposite)
            .map(Port::index)
    }

    /// Acknowledge rule for a flit presented at `port`.
    pub fn accepts(&self, port: usize, flit: &Flit) -> Accept {
        match self.link_states[port] {
            LinkState::SwitchedOff => Accept::Yes,
            LinkState::Bypass => match self.opposite_index(port) {
                Some(o) => Accept::IfWritable(o),
                None => Accept::No,
            },
            LinkState::Active => {
                let vc = flit.header.vc as usize;
                if self.inputs[port].vcs[vc].len() < self.params.vc_depth {
                    Accept::Yes
                } else {
                    Accept::No
                }
            }
        }
    }

    /// Source-side injection into the local port of a flat-mesh router. The
    /// flit is eligible for allocation immediately.
    pub fn inject_local(&mut self, flit: Flit) -> InjectOutcome {
        let port = Port::Local.index();
        debug_assert_eq!(self.kind, TopologyKind::FlatMesh);
        if self.link_states[port] == LinkState::SwitchedOff {
            return InjectOutcome::Dropped;
        }
        let q = &mut self.inputs[port].vcs[flit.header.vc as usize];
        if q.len() >= self.params.vc_depth {
            return InjectOutcome::Full;
        }
        q.push_back(Buffered {
            ready_at: flit.meta.inject_cycle,
            flit,
            speculative: false,
        });
        InjectOutcome::Accepted
    }

    /// Applies a morph configuration immediately.
    pub fn apply_morph(&mut self, m: &MorphPayload) -> Result<()> {
        if m.level != HierarchyLevel::Router {
            return Err(Error::Protocol("morph addressed to a ring switch".into()));
        }
        let kind = self.kind;
        apply_link_commands(&mut self.link_states, &m.links, |i| {
            Port::from_index(kind, i).and_then(Port::opposite).is_some()
        })?;
        self.region = Some(RegionTag {
            region_size: m.region_size,
            pe_type: m.pe_type,
        });
        Ok(())
    }

    pub fn has_pending_morphs(&self) -> bool {
        !self.pending_morphs.is_empty()
    }

    /// Commits morphs received in-band this cycle.
    pub fn commit_morphs(&mut self) {
        for m in std::mem::take(&mut self.pending_morphs) {
            if self.apply_morph(&m).is_err() {
                self.morph_errors += 1;
            }
        }
    }

    fn is_locked_source(&self, port: usize, vc: usize) -> bool {
        self.outputs.iter().any(|o| o.lock == Some((port, vc)))
    }

    /// One clock cycle.
    pub fn cycle(&mut self, now: u64, io: &mut RouterIo) {
        let n = self.ports();
        let mut reserved = [false; MAX_ROUTER_PORTS];

        // Intake: bypass, drop, or buffer every acknowledged arrival.
        for p in 0..n {
            let Some(flit) = io.incoming[p].take() else {
                continue;
            };
            match self.link_states[p] {
                LinkState::SwitchedOff => io.dropped += 1,
                LinkState::Bypass => {
                    let o = self
                        .opposite_index(p)
                        .expect("bypass on a port without opposite");
                    debug_assert!(io.outgoing[o].is_none());
                    io.outgoing[o] = Some(flit);
                    reserved[o] = true;
                }
                LinkState::Active => {
                    let q = &mut self.inputs[p].vcs[flit.header.vc as usize];
                    let speculative = q.is_empty();
                    let ready_at = if speculative {
                        now
                    } else {
                        now + SLOW_PATH_CYCLES - 1
                    };
                    q.push_back(Buffered {
                        flit,
                        ready_at,
                        speculative,
                    });
                    debug_assert!(q.len() <= self.params.vc_depth);
                }
            }
        }

        // Morph target: a starting flit for this block on VC-0 is examined
        // together with its follower.
        let mut hold_vc0 = [false; MAX_ROUTER_PORTS];
        for (p, hold) in hold_vc0.iter_mut().enumerate().take(n) {
            if self.is_locked_source(p, 0) {
                continue;
            }
            let q = &self.inputs[p].vcs[0];
            let Some(head) = q.front() else { continue };
            if head.ready_at > now
                || !head.flit.is_morph_marker()
                || head.flit.dest().block() != self.coord
            {
                continue;
            }
            match q.get(1) {
                None => *hold = true,
                Some(next) if next.flit.is_morph_marker() => {}
                Some(next) => {
                    if let Ok(m) = decode_morph(next.flit.payload) {
                        if m.level == HierarchyLevel::Router {
                            let q = &mut self.inputs[p].vcs[0];
                            q.pop_front();
                            q.pop_front();
                            self.pending_morphs.push(m);
                            io.consumed += 2;
                        }
                    }
                }
            }
        }

        // Stage 1: each input port nominates one VC.
        let mut request: [Option<(usize, usize)>; MAX_ROUTER_PORTS] = [None; MAX_ROUTER_PORTS];
        for p in 0..n {
            let mut wants: [Option<usize>; VCS_PER_PORT] = [None; VCS_PER_PORT];
            for (vc, want) in wants.iter_mut().enumerate() {
                if vc == 0 && hold_vc0[p] {
                    continue;
                }
                let Some(head) = self.inputs[p].vcs[vc].front() else {
                    continue;
                };
                if head.ready_at > now {
                    continue;
                }
                let out = self.route(&head.flit.header).index();
                if out >= n || self.link_states[out] == LinkState::SwitchedOff {
                    self.inputs[p].vcs[vc].pop_front();
                    io.dropped += 1;
                    continue;
                }
                let lock_ok = self.outputs[out].lock.is_none_or(|l| l == (p, vc));
                if io.writable[out] && !reserved[out] && lock_ok {
                    *want = Some(out);
                }
            }
            let locked = (0..VCS_PER_PORT)
                .find(|&vc| wants[vc].is_some_and(|o| self.outputs[o].lock == Some((p, vc))));
            let first = self.inputs[p].vc_pointer;
            let pick = locked.or_else(|| {
                [first, 1 - first]
                    .into_iter()
                    .find(|&vc| wants[vc].is_some())
            });
            if let Some(vc) = pick {
                request[p] = Some((vc, wants[vc].unwrap()));
            }
        }

        // Stage 2: weighted round-robin per output.
        for o in 0..n {
            if !request
                .iter()
                .any(|r| matches!(r, Some((_, out)) if *out == o))
            {
                continue;
            }
            let winner = self.outputs[o]
                .arbiter
                .grant(|p| matches!(request[p], Some((_, out)) if out == o))
                .expect("at least one requester");
            let (vc, _) = request[winner].unwrap();
            let granted = self.inputs[winner].vcs[vc].pop_front().unwrap();
            let out = &mut self.outputs[o];
            if out.lock == Some((winner, vc)) {
                out.lock = None;
            } else if granted.flit.is_morph_marker() {
                out.lock = Some((winner, vc));
            }
            self.inputs[winner].vc_pointer = 1 - vc;
            io.outgoing[o] = Some(granted.flit);
        }

        // Failed speculation falls back to the full pipeline.
        for input in &mut self.inputs {
            for q in &mut input.vcs {
                if let Some(head) = q.front_mut() {
                    if head.speculative {
                        head.speculative = false;
                        head.ready_at = now + SLOW_PATH_CYCLES - 1;
                    }
                }
            }
        }
    }
}
