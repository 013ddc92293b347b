//! Cycle-level model of a ring switch (RS).
//!
//! Four ring switches form a bidirectional ringlet. Every RS has a PE
//! injection buffer (Buf-3) and one buffer per ring direction (Buf-1 for the
//! clockwise stream, Buf-2 for the counter-clockwise stream). The master RS
//! (PE 0) is also attached to the block router: it owns a router-injection
//! buffer and two VC buffers for traffic coming down from the router.
//!
//! Port numbering: 0 faces the counter-clockwise neighbour, 1 the clockwise
//! neighbour, 2 is the PE and 3 the router (master only).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::address::{Flit, Header, NodeAddress, PES_PER_RINGLET};
use crate::arbiter::WeightedRoundRobin;
use crate::error::{Error, Result};
use crate::morph::{apply_link_commands, decode_morph, HierarchyLevel, MorphPayload, RegionTag};
use crate::router::{Accept, InjectOutcome};
use crate::topology::LinkState;

pub const RS_PORTS: usize = 4;
pub const PORT_CCW_SIDE: usize = 0;
pub const PORT_CW_SIDE: usize = 1;
pub const PORT_PE: usize = 2;
pub const PORT_ROUTER: usize = 3;

const SRC_CW: usize = 0;
const SRC_CCW: usize = 1;
const SRC_PE: usize = 2;
const SRC_VC0: usize = 3;
const SOURCES: usize = 5;

const OUT_CW: usize = 0;
const OUT_CCW: usize = 1;
const OUT_ROUTER: usize = 2;
const OUTPUTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RsAction {
    ForwardCw,
    ForwardCcw,
    EjectToPe,
    EjectToRouter,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[default]
    Cw,
    Ccw,
}

/// Next action for a flit at the RS `here`. Within a ringlet the shorter
/// direction is taken, clockwise on ties. Traffic leaving the ringlet heads
/// for the master.
pub fn rs_route(h: &Header, here: &NodeAddress) -> RsAction {
    let dest = &h.dest;
    if dest == here {
        return RsAction::EjectToPe;
    }
    let target = if dest.same_ringlet(here) {
        dest.pe
    } else if here.pe == 0 {
        return RsAction::EjectToRouter;
    } else {
        0
    };
    let n = PES_PER_RINGLET as u8;
    let d_cw = (target + n - here.pe) % n;
    if d_cw <= n / 2 {
        RsAction::ForwardCw
    } else {
        RsAction::ForwardCcw
    }
}

/// VC used for data travelling towards `pe`: PEs 0 and 1 share VC-0, PEs 2
/// and 3 share VC-1.
pub fn vc_for_destination(pe: u8) -> u8 {
    u8::from(pe >= 2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingParams {
    /// Flits per RS buffer.
    pub buffer_depth: usize,
    /// Denied cycles after which a source is served ahead of priority.
    pub starvation_threshold: u32,
    /// Stream that wins the router path when both ring streams compete.
    pub preferred_stream: Direction,
    pub vc_weights: [u32; 2],
}

impl Default for RingParams {
    fn default() -> Self {
        Self {
            buffer_depth: 4,
            starvation_threshold: 4,
            preferred_stream: Direction::Cw,
            vc_weights: [1, 1],
        }
    }
}

/// Per-cycle port signals exchanged with the network.
#[derive(Clone, Debug, Default)]
pub struct RsIo {
    pub incoming: [Option<Flit>; RS_PORTS],
    pub writable: [bool; RS_PORTS],
    pub outgoing: [Option<Flit>; RS_PORTS],
    /// Flits handed to the local PE.
    pub delivered: Vec<Flit>,
    pub dropped: u32,
    /// Control flits absorbed by this RS as a morph target.
    pub consumed: u32,
}

impl RsIo {
    pub fn clear(&mut self) {
        self.incoming = [None; RS_PORTS];
        self.writable = [false; RS_PORTS];
        self.outgoing = [None; RS_PORTS];
        self.delivered.clear();
        self.dropped = 0;
        self.consumed = 0;
    }
}

#[derive(Clone, Debug)]
pub struct RingSwitch {
    here: NodeAddress,
    params: RingParams,
    buf_cw: VecDeque<Flit>,
    buf_ccw: VecDeque<Flit>,
    buf_pe: VecDeque<Flit>,
    router_inj: VecDeque<Flit>,
    router_vcs: [VecDeque<Flit>; 2],
    vc_arb: WeightedRoundRobin,
    waits: [u32; SOURCES],
    max_pe_wait: u32,
    low_pointer: usize,
    locks: [Option<usize>; OUTPUTS],
    /// A starting flit waiting for its follower, per input.
    eject_hold: [Option<Flit>; RS_PORTS],
    link_states: [LinkState; RS_PORTS],
    pending_morphs: Vec<MorphPayload>,
    region: Option<RegionTag>,
    morph_errors: u64,
}

impl RingSwitch {
    pub fn new(here: NodeAddress, params: RingParams) -> Self {
        assert!(params.buffer_depth > 0, "buffer depth must be positive");
        Self {
            here,
            vc_arb: WeightedRoundRobin::new(params.vc_weights.to_vec()),
            params,
            buf_cw: VecDeque::new(),
            buf_ccw: VecDeque::new(),
            buf_pe: VecDeque::new(),
            router_inj: VecDeque::new(),
            router_vcs: Default::default(),
            waits: [0; SOURCES],
            max_pe_wait: 0,
            low_pointer: 0,
            locks: [None; OUTPUTS],
            eject_hold: [None; RS_PORTS],
            link_states: [LinkState::Active; RS_PORTS],
            pending_morphs: Vec::new(),
            region: None,
            morph_errors: 0,
        }
    }

    pub fn address(&self) -> NodeAddress {
        self.here
    }

    pub fn is_master(&self) -> bool {
        self.here.pe == 0
    }

    /// Number of ports this RS has (the router port exists on the master only).
    pub fn ports(&self) -> usize {
        if self.is_master() {
            RS_PORTS
        } else {
            RS_PORTS - 1
        }
    }

    pub fn link_state(&self, port: usize) -> LinkState {
        self.link_states[port]
    }

    pub fn link_states(&self) -> &[LinkState] {
        &self.link_states[..self.ports()]
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

    /// Largest number of consecutive arbitration losses seen by Buf-3.
    pub fn max_pe_wait(&self) -> u32 {
        self.max_pe_wait
    }

    pub fn pe_buffer_len(&self) -> usize {
        self.buf_pe.len()
    }

    pub fn buffered(&self) -> usize {
        self.buf_cw.len()
            + self.buf_ccw.len()
            + self.buf_pe.len()
            + self.router_inj.len()
            + self.router_vcs.iter().map(VecDeque::len).sum::<usize>()
            + self.eject_hold.iter().flatten().count()
    }

    pub fn for_each_flit(&self, mut f: impl FnMut(&Flit)) {
        for q in [&self.buf_cw, &self.buf_ccw, &self.buf_pe, &self.router_inj]
            .into_iter()
            .chain(self.router_vcs.iter())
        {
            q.iter().for_each(&mut f);
        }
        self.eject_hold.iter().flatten().for_each(f);
    }

    /// PE-side injection into Buf-3.
    pub fn inject(&mut self, flit: Flit) -> InjectOutcome {
        if self.link_states[PORT_PE] == LinkState::SwitchedOff {
            return InjectOutcome::Dropped;
        }
        if self.buf_pe.len() >= self.params.buffer_depth {
            return InjectOutcome::Full;
        }
        self.buf_pe.push_back(flit);
        InjectOutcome::Accepted
    }

    /// Acknowledge rule for a flit presented at `port`. Flits for the local
    /// PE are always taken.
    pub fn accepts(&self, port: usize, flit: &Flit) -> Accept {
        match self.link_states[port] {
            LinkState::SwitchedOff => Accept::Yes,
            LinkState::Bypass => match port {
                PORT_CCW_SIDE => Accept::IfWritable(PORT_CW_SIDE),
                PORT_CW_SIDE => Accept::IfWritable(PORT_CCW_SIDE),
                _ => Accept::Yes,
            },
            LinkState::Active => {
                if *flit.dest() == self.here {
                    return Accept::Yes;
                }
                let q = match port {
                    PORT_CCW_SIDE => &self.buf_cw,
                    PORT_CW_SIDE => &self.buf_ccw,
                    PORT_ROUTER => &self.router_vcs[flit.header.vc as usize],
                    _ => return Accept::No,
                };
                if q.len() < self.params.buffer_depth {
                    Accept::Yes
                } else {
                    Accept::No
                }
            }
        }
    }

    /// Applies a morph configuration immediately.
    pub fn apply_morph(&mut self, m: &MorphPayload) -> Result<()> {
        if m.level != HierarchyLevel::RingSwitch {
            return Err(Error::Protocol("morph addressed to a router".into()));
        }
        let ports = self.ports();
        let master = self.is_master();
        apply_link_commands(&mut self.link_states[..ports], &m.links, |i| match i {
            PORT_CCW_SIDE | PORT_CW_SIDE => true,
            PORT_PE | PORT_ROUTER => master,
            _ => false,
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

    pub fn commit_morphs(&mut self) {
        for m in std::mem::take(&mut self.pending_morphs) {
            if self.apply_morph(&m).is_err() {
                self.morph_errors += 1;
            }
        }
    }

    /// Ejection towards the PE, pairing starting flits with their followers.
    fn eject(&mut self, slot: usize, flit: Flit, io: &mut RsIo) {
        if self.link_states[PORT_PE] == LinkState::SwitchedOff {
            io.dropped += 1;
            return;
        }
        match self.eject_hold[slot].take() {
            None if flit.is_morph_marker() => self.eject_hold[slot] = Some(flit),
            None => io.delivered.push(flit),
            Some(marker) if flit.is_morph_marker() => {
                io.delivered.push(marker);
                io.delivered.push(flit);
            }
            Some(_) => match decode_morph(flit.payload) {
                Ok(m) if m.level == HierarchyLevel::RingSwitch => {
                    self.pending_morphs.push(m);
                    io.consumed += 2;
                }
                _ => io.dropped += 2,
            },
        }
    }

    fn queue(&self, src: usize) -> &VecDeque<Flit> {
        match src {
            SRC_CW => &self.buf_cw,
            SRC_CCW => &self.buf_ccw,
            SRC_PE => &self.buf_pe,
            _ => &self.router_vcs[src - SRC_VC0],
        }
    }

    fn queue_mut(&mut self, src: usize) -> &mut VecDeque<Flit> {
        match src {
            SRC_CW => &mut self.buf_cw,
            SRC_CCW => &mut self.buf_ccw,
            SRC_PE => &mut self.buf_pe,
            _ => &mut self.router_vcs[src - SRC_VC0],
        }
    }

    fn eject_slot(src: usize) -> usize {
        match src {
            SRC_CW => PORT_CCW_SIDE,
            SRC_CCW => PORT_CW_SIDE,
            SRC_PE => PORT_PE,
            _ => PORT_ROUTER,
        }
    }

    fn is_high_priority(src: usize, out: usize) -> bool {
        matches!(
            (src, out),
            (SRC_CW, OUT_CW) | (SRC_CCW, OUT_CCW) | (SRC_CW | SRC_CCW, OUT_ROUTER)
        )
    }

    /// One clock cycle.
    pub fn cycle(&mut self, _now: u64, io: &mut RsIo) {
        let mut reserved = [false; RS_PORTS];

        // Intake.
        for port in [PORT_CCW_SIDE, PORT_CW_SIDE, PORT_ROUTER] {
            let Some(flit) = io.incoming[port].take() else {
                continue;
            };
            match self.link_states[port] {
                LinkState::SwitchedOff => io.dropped += 1,
                LinkState::Bypass => match port {
                    PORT_CCW_SIDE | PORT_CW_SIDE => {
                        let o = PORT_CCW_SIDE + PORT_CW_SIDE - port;
                        debug_assert!(io.outgoing[o].is_none());
                        io.outgoing[o] = Some(flit);
                        reserved[o] = true;
                    }
                    _ => io.delivered.push(flit),
                },
                LinkState::Active => {
                    if *flit.dest() == self.here {
                        self.eject(port, flit, io);
                        continue;
                    }
                    let depth = self.params.buffer_depth;
                    let q = match port {
                        PORT_CCW_SIDE => &mut self.buf_cw,
                        PORT_CW_SIDE => &mut self.buf_ccw,
                        _ => &mut self.router_vcs[flit.header.vc as usize],
                    };
                    q.push_back(flit);
                    debug_assert!(q.len() <= depth);
                }
            }
        }

        // PE bypass goes straight to the router link.
        if self.is_master()
            && self.link_states[PORT_PE] == LinkState::Bypass
            && io.writable[PORT_ROUTER]
            && !reserved[PORT_ROUTER]
        {
            if let Some(f) = self.buf_pe.pop_front() {
                io.outgoing[PORT_ROUTER] = Some(f);
                reserved[PORT_ROUTER] = true;
            }
        }

        // Router path: the injection buffer drains onto the link first.
        let mut router_direct = false;
        let mut router_buffer = false;
        if self.is_master() && self.link_states[PORT_ROUTER] != LinkState::SwitchedOff {
            let link_free = io.writable[PORT_ROUTER] && !reserved[PORT_ROUTER];
            let mut link_used = false;
            if link_free {
                if let Some(f) = self.router_inj.pop_front() {
                    io.outgoing[PORT_ROUTER] = Some(f);
                    link_used = true;
                }
            }
            router_direct = link_free && !link_used && self.router_inj.is_empty();
            router_buffer = self.router_inj.len() < self.params.buffer_depth;
        }

        let available = [
            io.writable[PORT_CW_SIDE] && !reserved[PORT_CW_SIDE],
            io.writable[PORT_CCW_SIDE] && !reserved[PORT_CCW_SIDE],
            router_direct || router_buffer,
        ];

        // Requests: one per source.
        let pe_bypassed = self.link_states[PORT_PE] == LinkState::Bypass && self.is_master();
        let mut request: [Option<usize>; SOURCES] = [None; SOURCES];
        for src in 0..SOURCES {
            if src == SRC_PE && pe_bypassed {
                continue;
            }
            let mut head = self.queue(src).front().copied();
            if let Some(f) = head {
                if rs_route(&f.header, &self.here) == RsAction::EjectToPe {
                    self.queue_mut(src).pop_front();
                    self.eject(Self::eject_slot(src), f, io);
                    head = self.queue(src).front().copied();
                }
            }
            let Some(f) = head else {
                self.waits[src] = 0;
                continue;
            };
            let (out, port) = match rs_route(&f.header, &self.here) {
                RsAction::ForwardCw => (OUT_CW, PORT_CW_SIDE),
                RsAction::ForwardCcw => (OUT_CCW, PORT_CCW_SIDE),
                RsAction::EjectToRouter => (OUT_ROUTER, PORT_ROUTER),
                RsAction::EjectToPe => continue,
            };
            if self.link_states[port] == LinkState::SwitchedOff {
                self.queue_mut(src).pop_front();
                io.dropped += 1;
                continue;
            }
            let lock_ok = self.locks[out].is_none_or(|s| s == src);
            if available[out] && lock_ok {
                request[src] = Some(out);
            }
        }

        // Only one VC presents a request.
        let vc_locked = (0..2)
            .find(|&v| request[SRC_VC0 + v].is_some_and(|o| self.locks[o] == Some(SRC_VC0 + v)));
        let vc_pick = vc_locked.or_else(|| self.vc_arb.peek(|v| request[SRC_VC0 + v].is_some()));
        for v in 0..2 {
            if Some(v) != vc_pick {
                request[SRC_VC0 + v] = None;
            }
        }

        let threshold = self.params.starvation_threshold;
        for out in 0..OUTPUTS {
            let reqs: Vec<usize> = (0..SOURCES).filter(|&s| request[s] == Some(out)).collect();
            if reqs.is_empty() {
                continue;
            }
            let starving: Vec<usize> = reqs
                .iter()
                .copied()
                .filter(|&s| self.waits[s] >= threshold)
                .collect();
            let high: Vec<usize> = reqs
                .iter()
                .copied()
                .filter(|&s| Self::is_high_priority(s, out))
                .collect();
            let winner = if let Some(s) = self.locks[out] {
                s
            } else if !starving.is_empty() {
                if starving.contains(&SRC_PE) {
                    SRC_PE
                } else {
                    *starving.iter().max_by_key(|&&s| self.waits[s]).unwrap()
                }
            } else if high.len() == 1 {
                high[0]
            } else if !high.is_empty() {
                match self.params.preferred_stream {
                    Direction::Cw => SRC_CW,
                    Direction::Ccw => SRC_CCW,
                }
            } else {
                let start = self.low_pointer;
                let s = (0..SOURCES)
                    .map(|i| (start + i) % SOURCES)
                    .find(|s| reqs.contains(s))
                    .unwrap();
                self.low_pointer = (s + 1) % SOURCES;
                s
            };
            debug_assert!(reqs.contains(&winner));

            let flit = self.queue_mut(winner).pop_front().unwrap();
            if self.locks[out] == Some(winner) {
                self.locks[out] = None;
            } else if flit.is_morph_marker() {
                self.locks[out] = Some(winner);
            }
            if winner >= SRC_VC0 {
                self.vc_arb.commit(winner - SRC_VC0);
            }
            for &s in &reqs {
                if s == winner {
                    self.waits[s] = 0;
                } else {
                    self.waits[s] += 1;
                }
            }
            match out {
                OUT_CW => io.outgoing[PORT_CW_SIDE] = Some(flit),
                OUT_CCW => io.outgoing[PORT_CCW_SIDE] = Some(flit),
                _ if router_direct => io.outgoing[PORT_ROUTER] = Some(flit),
                _ => self.router_inj.push_back(flit),
            }
        }
        self.max_pe_wait = self.max_pe_wait.max(self.waits[SRC_PE]);
    }
}
