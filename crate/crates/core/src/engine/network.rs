//! Component wiring and the synchronous two-phase clock.
//!
//! Every link is a single-flit register. A cycle runs in three steps:
//!
//! 1. Acknowledge: each occupied link learns whether its receiver takes the
//!    flit this cycle. Bypassed ports pass the question on to the link they
//!    forward into.
//! 2. Compute: every router and ring switch reads the start-of-cycle link
//!    contents plus the acknowledgements and stages its outputs. Components
//!    only touch their own state, so evaluation order is irrelevant.
//! 3. Commit: acknowledged links are emptied, staged outputs are latched and
//!    in-band morphs take effect.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::address::{Flit, GlobalPeIndex, NodeAddress, PES_PER_RINGLET, RINGLETS_PER_BLOCK};
use crate::error::{Error, Result};
use crate::morph::{HierarchyLevel, MorphPayload};
use crate::ring::{
    RingParams, RingSwitch, RsIo, PORT_CCW_SIDE, PORT_CW_SIDE, PORT_ROUTER, RS_PORTS,
};
use crate::router::{
    Accept, InjectOutcome, Port, Router, RouterIo, RouterParams, MAX_ROUTER_PORTS,
};
use crate::topology::{TopologyKind, TopologySpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub router: RouterParams,
    pub ring: RingParams,
}

impl NetworkParams {
    /// Uses `depth` for every router VC and ring-switch buffer.
    pub fn with_buffer_depth(depth: usize) -> Self {
        let mut p = Self::default();
        p.router.vc_depth = depth;
        p.ring.buffer_depth = depth;
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Node {
    Router(usize),
    Switch(usize),
}

#[derive(Clone, Copy, Debug)]
struct Endpoint {
    node: Node,
    port: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Out {
    Unconnected,
    Link(usize),
    /// Flat-mesh ejection into the local PE.
    Eject,
}

#[derive(Clone, Debug)]
struct Link {
    flit: Option<Flit>,
    to: Endpoint,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
enum AckState {
    #[default]
    Unknown,
    Resolving,
    Done(bool),
}

/// What happened during one cycle.
#[derive(Clone, Debug, Default)]
pub struct StepReport {
    pub delivered: Vec<Flit>,
    pub dropped: u64,
    /// Control flits absorbed by morph targets.
    pub consumed: u64,
}

impl StepReport {
    pub fn clear(&mut self) {
        self.delivered.clear();
        self.dropped = 0;
        self.consumed = 0;
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    spec: TopologySpec,
    params: NetworkParams,
    routers: Vec<Router>,
    switches: Vec<RingSwitch>,
    links: Vec<Link>,
    router_in: Vec<[Option<usize>; MAX_ROUTER_PORTS]>,
    router_out: Vec<[Out; MAX_ROUTER_PORTS]>,
    switch_in: Vec<[Option<usize>; RS_PORTS]>,
    switch_out: Vec<[Option<usize>; RS_PORTS]>,
    order: Vec<Node>,
    shuffle: Option<ChaCha8Rng>,
    ack: Vec<AckState>,
    staged: Vec<Option<Flit>>,
    morph_dirty: Vec<Node>,
    rio: RouterIo,
    sio: RsIo,
}

impl Network {
    pub fn new(spec: TopologySpec, params: NetworkParams) -> Result<Self> {
        spec.validate()?;
        if params.router.vc_depth == 0 || params.ring.buffer_depth == 0 {
            return Err(Error::Config("buffer depth must be positive".into()));
        }
        if params.router.ring_weight == 0
            || params.router.mesh_weight == 0
            || params.ring.vc_weights.contains(&0)
        {
            return Err(Error::Config("arbiter weights must be positive".into()));
        }
        let mut net = Self {
            spec,
            params,
            routers: Vec::new(),
            switches: Vec::new(),
            links: Vec::new(),
            router_in: Vec::new(),
            router_out: Vec::new(),
            switch_in: Vec::new(),
            switch_out: Vec::new(),
            order: Vec::new(),
            shuffle: None,
            ack: Vec::new(),
            staged: Vec::new(),
            morph_dirty: Vec::new(),
            rio: RouterIo::default(),
            sio: RsIo::default(),
        };
        net.build();
        Ok(net)
    }

    fn connect(&mut self, from: Endpoint, to: Endpoint) {
        let l = self.links.len();
        self.links.push(Link { flit: None, to });
        match from.node {
            Node::Router(r) => self.router_out[r][from.port] = Out::Link(l),
            Node::Switch(s) => self.switch_out[s][from.port] = Some(l),
        }
        match to.node {
            Node::Router(r) => self.router_in[r][to.port] = Some(l),
            Node::Switch(s) => self.switch_in[s][to.port] = Some(l),
        }
    }

    fn build(&mut self) {
        let (rows, cols, kind) = (self.spec.rows, self.spec.cols, self.spec.kind);
        for y in 0..rows {
            for x in 0..cols {
                self.routers
                    .push(Router::new((x as u8, y as u8), kind, self.params.router));
            }
        }
        self.router_in = vec![[None; MAX_ROUTER_PORTS]; self.routers.len()];
        self.router_out = vec![[Out::Unconnected; MAX_ROUTER_PORTS]; self.routers.len()];
        let rp = |r: usize, port: Port| Endpoint {
            node: Node::Router(r),
            port: port.index(),
        };
        for y in 0..rows {
            for x in 0..cols {
                let r = y * cols + x;
                if x + 1 < cols {
                    self.connect(rp(r, Port::East), rp(r + 1, Port::West));
                    self.connect(rp(r + 1, Port::West), rp(r, Port::East));
                }
                if y + 1 < rows {
                    self.connect(rp(r, Port::South), rp(r + cols, Port::North));
                    self.connect(rp(r + cols, Port::North), rp(r, Port::South));
                }
            }
        }
        match kind {
            TopologyKind::FlatMesh => {
                for out in &mut self.router_out {
                    out[Port::Local.index()] = Out::Eject;
                }
            }
            TopologyKind::RingMesh => {
                for i in 0..self.spec.pe_count() {
                    let a = self
                        .spec
                        .index_to_address(GlobalPeIndex(i as u32))
                        .expect("in range");
                    self.switches.push(RingSwitch::new(a, self.params.ring));
                }
                self.switch_in = vec![[None; RS_PORTS]; self.switches.len()];
                self.switch_out = vec![[None; RS_PORTS]; self.switches.len()];
                let sp = |s: usize, port: usize| Endpoint {
                    node: Node::Switch(s),
                    port,
                };
                let n = PES_PER_RINGLET;
                for r in 0..self.routers.len() {
                    for k in 0..RINGLETS_PER_BLOCK {
                        let base = (r * RINGLETS_PER_BLOCK + k) * n;
                        self.connect(rp(r, Port::Ringlet(k as u8)), sp(base, PORT_ROUTER));
                        self.connect(sp(base, PORT_ROUTER), rp(r, Port::Ringlet(k as u8)));
                        for p in 0..n {
                            let next = base + (p + 1) % n;
                            self.connect(sp(base + p, PORT_CW_SIDE), sp(next, PORT_CCW_SIDE));
                            self.connect(sp(next, PORT_CCW_SIDE), sp(base + p, PORT_CW_SIDE));
                        }
                    }
                }
            }
        }
        self.order = (0..self.routers.len())
            .map(Node::Router)
            .chain((0..self.switches.len()).map(Node::Switch))
            .collect();
        self.ack = vec![AckState::Unknown; self.links.len()];
        self.staged = vec![None; self.links.len()];
    }

    pub fn spec(&self) -> &TopologySpec {
        &self.spec
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Evaluates components in a fresh random order every cycle. The result
    /// must be identical to the default order.
    pub fn shuffle_evaluation(&mut self, seed: u64) {
        self.shuffle = Some(ChaCha8Rng::seed_from_u64(seed));
    }

    pub fn routers(&self) -> &[Router] {
        &self.routers
    }

    pub fn switches(&self) -> &[RingSwitch] {
        &self.switches
    }

    fn router_index(&self, block: (u8, u8)) -> Result<usize> {
        let (x, y) = (block.0 as usize, block.1 as usize);
        if x >= self.spec.cols || y >= self.spec.rows {
            return Err(Error::Address(format!(
                "block {block:?} is outside the mesh"
            )));
        }
        Ok(y * self.spec.cols + x)
    }

    pub fn router(&self, block: (u8, u8)) -> Result<&Router> {
        Ok(&self.routers[self.router_index(block)?])
    }

    pub fn router_mut(&mut self, block: (u8, u8)) -> Result<&mut Router> {
        let i = self.router_index(block)?;
        Ok(&mut self.routers[i])
    }

    pub fn switch(&self, a: &NodeAddress) -> Result<&RingSwitch> {
        self.switch_index(a).map(|i| &self.switches[i])
    }

    pub fn switch_mut(&mut self, a: &NodeAddress) -> Result<&mut RingSwitch> {
        let i = self.switch_index(a)?;
        Ok(&mut self.switches[i])
    }

    fn switch_index(&self, a: &NodeAddress) -> Result<usize> {
        if self.spec.kind != TopologyKind::RingMesh {
            return Err(Error::Address("flat meshes have no ring switches".into()));
        }
        Ok(self.spec.address_to_index(a)?.0 as usize)
    }

    /// Out-of-band reconfiguration of the component at `dest`.
    pub fn apply_morph(&mut self, dest: &NodeAddress, m: &MorphPayload) -> Result<()> {
        self.spec.check(dest)?;
        match m.level {
            HierarchyLevel::Router => self.router_mut(dest.block())?.apply_morph(m),
            HierarchyLevel::RingSwitch => self.switch_mut(dest)?.apply_morph(m),
        }
    }

    /// Offers a flit to the source PE's injection buffer.
    pub fn inject(&mut self, src: GlobalPeIndex, flit: Flit) -> InjectOutcome {
        let i = src.0 as usize;
        match self.spec.kind {
            TopologyKind::RingMesh => self.switches[i].inject(flit),
            TopologyKind::FlatMesh => self.routers[i].inject_local(flit),
        }
    }

    pub fn in_flight(&self) -> u64 {
        let links = self.links.iter().filter(|l| l.flit.is_some()).count();
        let routers: usize = self.routers.iter().map(Router::buffered).sum();
        let switches: usize = self.switches.iter().map(RingSwitch::buffered).sum();
        (links + routers + switches) as u64
    }

    pub fn for_each_flit(&self, mut f: impl FnMut(&Flit)) {
        self.links
            .iter()
            .filter_map(|l| l.flit.as_ref())
            .for_each(&mut f);
        self.routers.iter().for_each(|r| r.for_each_flit(&mut f));
        self.switches.iter().for_each(|s| s.for_each_flit(&mut f));
    }

    fn out_link(&self, node: Node, port: usize) -> Out {
        match node {
            Node::Router(r) => self.router_out[r][port],
            Node::Switch(s) => self.switch_out[s][port].map_or(Out::Unconnected, Out::Link),
        }
    }

    fn output_writable(&self, out: Out, ack: &mut [AckState]) -> bool {
        match out {
            Out::Unconnected => false,
            Out::Eject => true,
            Out::Link(l) => self.links[l].flit.is_none() || self.resolve(l, ack),
        }
    }

    fn resolve(&self, l: usize, ack: &mut [AckState]) -> bool {
        match ack[l] {
            AckState::Done(b) => return b,
            // A bypass cycle with every link full: nothing can move.
            AckState::Resolving => return false,
            AckState::Unknown => {}
        }
        let Some(flit) = self.links[l].flit else {
            ack[l] = AckState::Done(false);
            return false;
        };
        ack[l] = AckState::Resolving;
        let to = self.links[l].to;
        let verdict = match to.node {
            Node::Router(r) => self.routers[r].accepts(to.port, &flit),
            Node::Switch(s) => self.switches[s].accepts(to.port, &flit),
        };
        let result = match verdict {
            Accept::Yes => true,
            Accept::No => false,
            Accept::IfWritable(o) => self.output_writable(self.out_link(to.node, o), ack),
        };
        ack[l] = AckState::Done(result);
        result
    }

    fn acked(&self, l: usize) -> bool {
        self.ack[l] == AckState::Done(true)
    }

    /// Advances the network by one cycle.
    pub fn step(&mut self, now: u64, report: &mut StepReport) {
        report.clear();
        let mut ack = std::mem::take(&mut self.ack);
        ack.iter_mut().for_each(|a| *a = AckState::Unknown);
        for l in 0..self.links.len() {
            if self.links[l].flit.is_some() {
                self.resolve(l, &mut ack);
            }
        }
        self.ack = ack;

        let mut order = std::mem::take(&mut self.order);
        if let Some(rng) = self.shuffle.as_mut() {
            order.shuffle(rng);
        }
        for &node in &order {
            match node {
                Node::Router(r) => self.step_router(r, now, report),
                Node::Switch(s) => self.step_switch(s, now, report),
            }
        }
        self.order = order;

        for l in 0..self.links.len() {
            if self.acked(l) {
                self.links[l].flit = None;
            }
            if let Some(mut f) = self.staged[l].take() {
                debug_assert!(
                    self.links[l].flit.is_none(),
                    "overwrote an unacknowledged flit"
                );
                if f.meta.hops == 0 {
                    f.meta.depart_cycle = now;
                }
                f.meta.hops += 1;
                self.links[l].flit = Some(f);
            }
        }
        for node in std::mem::take(&mut self.morph_dirty) {
            match node {
                Node::Router(r) => self.routers[r].commit_morphs(),
                Node::Switch(s) => self.switches[s].commit_morphs(),
            }
        }
    }

    fn step_router(&mut self, r: usize, now: u64, report: &mut StepReport) {
        let mut io = std::mem::take(&mut self.rio);
        io.clear();
        for p in 0..self.routers[r].ports() {
            if let Some(l) = self.router_in[r][p] {
                if self.acked(l) {
                    io.incoming[p] = self.links[l].flit;
                }
            }
            io.writable[p] = match self.router_out[r][p] {
                Out::Unconnected => false,
                Out::Eject => true,
                Out::Link(l) => self.links[l].flit.is_none() || self.acked(l),
            };
        }
        self.routers[r].cycle(now, &mut io);
        for p in 0..MAX_ROUTER_PORTS {
            if let Some(f) = io.outgoing[p] {
                match self.router_out[r][p] {
                    Out::Link(l) => self.staged[l] = Some(f),
                    Out::Eject => report.delivered.push(f),
                    Out::Unconnected => report.dropped += 1,
                }
            }
        }
        report.dropped += u64::from(io.dropped);
        report.consumed += u64::from(io.consumed);
        if self.routers[r].has_pending_morphs() {
            self.morph_dirty.push(Node::Router(r));
        }
        self.rio = io;
    }

    fn step_switch(&mut self, s: usize, now: u64, report: &mut StepReport) {
        let mut io = std::mem::take(&mut self.sio);
        io.clear();
        for p in 0..RS_PORTS {
            if let Some(l) = self.switch_in[s][p] {
                if self.acked(l) {
                    io.incoming[p] = self.links[l].flit;
                }
            }
            io.writable[p] = match self.switch_out[s][p] {
                None => false,
                Some(l) => self.links[l].flit.is_none() || self.acked(l),
            };
        }
        self.switches[s].cycle(now, &mut io);
        for p in [PORT_CCW_SIDE, PORT_CW_SIDE, PORT_ROUTER] {
            if let Some(f) = io.outgoing[p] {
                match self.switch_out[s][p] {
                    Some(l) => self.staged[l] = Some(f),
                    None => report.dropped += 1,
                }
            }
        }
        report.delivered.append(&mut io.delivered);
        report.dropped += u64::from(io.dropped);
        report.consumed += u64::from(io.consumed);
        if self.switches[s].has_pending_morphs() {
            self.morph_dirty.push(Node::Switch(s));
        }
        self.sio = io;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn link_counts() {
        // 2x3 mesh: 7 adjacent pairs, two links each. Each ringlet adds two
        // router links and eight ring links.
        let net = Network::new(TopologySpec::ring_mesh(2, 3), NetworkParams::default()).unwrap();
        assert_eq!(net.link_count(), 14 + 6 * 4 * 10);
        let flat = Network::new(TopologySpec::flat_mesh(4, 4), NetworkParams::default()).unwrap();
        assert_eq!(flat.link_count(), 2 * 24);
    }

    #[test]
    fn rejects_zero_depth() {
        let spec = TopologySpec::ring_mesh(1, 1);
        assert!(Network::new(spec, NetworkParams::with_buffer_depth(0)).is_err());
    }

    #[test]
    fn idle_network_stays_empty() {
        let mut net =
            Network::new(TopologySpec::ring_mesh(2, 2), NetworkParams::default()).unwrap();
        let mut report = StepReport::default();
        for now in 0..10 {
            net.step(now, &mut report);
            assert!(report.delivered.is_empty());
        }
        assert_eq!(net.in_flight(), 0);
    }
}
