//! Simulation driver: traffic injection, the network clock and statistics.

mod network;
mod stats;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use network::{Network, NetworkParams, StepReport};
pub use stats::{CycleRecord, LatencyMode, PacketRecord, SimStats, Trace, TraceLevel};

use crate::address::{Flit, FlitMeta, GlobalPeIndex, Header, NodeAddress, RINGLETS_PER_BLOCK};
use crate::error::{Error, Result};
use crate::morph::{encode_morph, escape_encode, HierarchyLevel, LogicalWord, MorphPayload};
use crate::ring::vc_for_destination;
use crate::router::InjectOutcome;
use crate::topology::{TopologyKind, TopologySpec};
use crate::traffic::{Injection, TrafficConfig, TrafficGenerator};
use stats::StatsCollector;

/// Default ceiling on drain length.
pub const DEFAULT_DRAIN_CAP: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub topology: TopologySpec,
    pub traffic: TrafficConfig,
    /// Cycles with injection enabled.
    pub cycles: u64,
    /// Leading cycles excluded from measurement; defaults to 10 % of `cycles`.
    pub warmup: Option<u64>,
    /// Keep stepping without injection until the network is empty.
    pub drain: bool,
    pub drain_cap: u64,
    pub latency: LatencyMode,
    pub network: NetworkParams,
    pub trace: TraceLevel,
}

impl SimConfig {
    pub fn new(topology: TopologySpec, traffic: TrafficConfig, cycles: u64) -> Self {
        Self {
            topology,
            traffic,
            cycles,
            warmup: None,
            drain: true,
            drain_cap: DEFAULT_DRAIN_CAP,
            latency: LatencyMode::default(),
            network: NetworkParams::default(),
            trace: TraceLevel::default(),
        }
    }

    pub fn warmup_cycles(&self) -> u64 {
        self.warmup.unwrap_or(self.cycles / 10)
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.traffic.validate(self.topology.pe_count())?;
        if self.cycles == 0 {
            return Err(Error::Config("cycle count must be positive".into()));
        }
        if self.warmup_cycles() >= self.cycles {
            return Err(Error::Config(format!(
                "warmup of {} cycles leaves no measurement window in {}",
                self.warmup_cycles(),
                self.cycles
            )));
        }
        Ok(())
    }
}

/// VC assigned to data heading for `dst`.
pub fn data_vc(spec: &TopologySpec, dst: &NodeAddress) -> u8 {
    match spec.kind {
        TopologyKind::RingMesh => vc_for_destination(dst.pe),
        TopologyKind::FlatMesh => {
            ((dst.router_y as usize * spec.cols + dst.router_x as usize) & 1) as u8
        }
    }
}

/// A network together with its PEs.
#[derive(Clone, Debug)]
pub struct Simulation {
    net: Network,
    generator: Option<TrafficGenerator>,
    collector: StatsCollector,
    cycle: u64,
    next_id: u64,
    injecting: bool,
    outboxes: Vec<VecDeque<Flit>>,
    outbox_len: usize,
    offered: Vec<Injection>,
    report: StepReport,
    trace_level: TraceLevel,
    trace: Trace,
    probe: Option<(u64, Option<u64>)>,
}

impl Simulation {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let mut sim = Self::idle(config.topology, config.network)?;
        sim.generator = Some(TrafficGenerator::new(
            config.traffic,
            config.topology.pe_count(),
        )?);
        sim.collector = StatsCollector::new(config.cycles, config.warmup_cycles(), config.latency);
        sim.trace_level = config.trace;
        sim.injecting = true;
        Ok(sim)
    }

    /// A network with no traffic source, for probes and morph experiments.
    pub fn idle(spec: TopologySpec, params: NetworkParams) -> Result<Self> {
        let net = Network::new(spec, params)?;
        let pes = spec.pe_count();
        Ok(Self {
            net,
            generator: None,
            collector: StatsCollector::new(u64::MAX, 0, LatencyMode::Source),
            cycle: 0,
            next_id: 0,
            injecting: false,
            outboxes: vec![VecDeque::new(); pes],
            outbox_len: 0,
            offered: Vec::new(),
            report: StepReport::default(),
            trace_level: TraceLevel::Off,
            trace: Trace::default(),
            probe: None,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn spec(&self) -> &TopologySpec {
        self.net.spec()
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn set_injecting(&mut self, on: bool) {
        self.injecting = on;
    }

    pub fn stats(&self) -> SimStats {
        self.collector.snapshot()
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Trace {
        std::mem::take(&mut self.trace)
    }

    /// Flits accepted by the network and neither delivered nor dropped,
    /// according to the counters.
    pub fn in_flight(&self) -> u64 {
        self.collector.in_flight()
    }

    /// Counter-derived and physically counted in-flight flits agree.
    pub fn conserves_flits(&self) -> bool {
        self.collector.in_flight() == self.net.in_flight()
    }

    pub fn is_idle(&self) -> bool {
        self.outbox_len == 0 && self.net.in_flight() == 0
    }

    fn new_flit(
        &mut self,
        src: NodeAddress,
        dst: NodeAddress,
        vc: u8,
        payload: u32,
        control: bool,
    ) -> Flit {
        let mut meta = FlitMeta::new(self.next_id, self.cycle, src);
        meta.control = control;
        self.next_id += 1;
        Flit::new(Header::new(dst, vc), payload, meta)
    }

    fn account_injection(&mut self, outcome: InjectOutcome, flit: &Flit) {
        match outcome {
            InjectOutcome::Accepted => self.collector.on_injected(flit),
            InjectOutcome::Dropped => {
                self.collector.on_injected(flit);
                self.collector.on_dropped(1);
            }
            InjectOutcome::Full => {}
        }
    }

    fn enqueue(&mut self, src: GlobalPeIndex, flits: impl IntoIterator<Item = Flit>) {
        for f in flits {
            self.outboxes[src.0 as usize].push_back(f);
            self.outbox_len += 1;
        }
    }

    /// Queues a data packet at `src`. Payloads equal to the marker are
    /// escaped into a two-flit sequence.
    pub fn send_data(&mut self, src: &NodeAddress, dst: &NodeAddress, payload: u32) -> Result<u64> {
        let spec = *self.spec();
        let s = spec.address_to_index(src)?;
        spec.check(dst)?;
        if src == dst {
            return Err(Error::Address(format!("{src} cannot send to itself")));
        }
        let vc = data_vc(&spec, dst);
        let words = escape_encode(&[LogicalWord::Data(payload)])?;
        let last = words.len() - 1;
        let flits: Vec<Flit> = words
            .iter()
            .enumerate()
            .map(|(i, &w)| self.new_flit(*src, *dst, vc, w, i != last))
            .collect();
        let id = flits[last].meta.packet_id;
        self.enqueue(s, flits);
        Ok(id)
    }

    /// Queues an escaped morph sequence from `src` to the component at `dest`.
    pub fn send_morph(
        &mut self,
        src: &NodeAddress,
        dest: &NodeAddress,
        m: &MorphPayload,
    ) -> Result<()> {
        let spec = *self.spec();
        let s = spec.address_to_index(src)?;
        spec.check(dest)?;
        let mut dest = *dest;
        // A router target is reached by crossing the router; from inside the
        // destination ringlet that means aiming at a sibling ringlet.
        if m.level == HierarchyLevel::Router
            && spec.kind == TopologyKind::RingMesh
            && src.block() == dest.block()
            && src.ringlet == dest.ringlet
        {
            dest.ringlet = (src.ringlet + 1) % RINGLETS_PER_BLOCK as u8;
        }
        let dest = &dest;
        let word = encode_morph(m)?;
        let flits: Vec<Flit> = escape_encode(&[LogicalWord::Config(word)])?
            .into_iter()
            .map(|w| self.new_flit(*src, *dest, 0, w, true))
            .collect();
        self.enqueue(s, flits);
        Ok(())
    }

    fn offer(&mut self, inj: Injection) {
        let spec = *self.spec();
        let src = spec
            .index_to_address(GlobalPeIndex(inj.src))
            .expect("generator index");
        let dst = spec
            .index_to_address(GlobalPeIndex(inj.dst))
            .expect("generator index");
        if !self.outboxes[inj.src as usize].is_empty() {
            self.collector.stats.throttled += 1;
            return;
        }
        if inj.payload == crate::address::MORPH_MARKER {
            self.send_data(&src, &dst, inj.payload)
                .expect("valid addresses");
            return;
        }
        let vc = data_vc(&spec, &dst);
        let mut meta = FlitMeta::new(self.next_id, self.cycle, src);
        meta.control = false;
        let flit = Flit::new(Header::new(dst, vc), inj.payload, meta);
        let outcome = self.net.inject(GlobalPeIndex(inj.src), flit);
        if outcome == InjectOutcome::Full {
            self.collector.stats.throttled += 1;
        } else {
            self.next_id += 1;
        }
        self.account_injection(outcome, &flit);
    }

    /// Advances one cycle.
    pub fn step(&mut self) {
        let now = self.cycle;
        if self.outbox_len > 0 {
            for i in 0..self.outboxes.len() {
                let Some(&front) = self.outboxes[i].front() else {
                    continue;
                };
                let mut f = front;
                f.meta.inject_cycle = now;
                let outcome = self.net.inject(GlobalPeIndex(i as u32), f);
                if outcome != InjectOutcome::Full {
                    self.outboxes[i].pop_front();
                    self.outbox_len -= 1;
                }
                self.account_injection(outcome, &f);
            }
        }
        if self.injecting {
            if let Some(generator) = self.generator.as_mut() {
                let mut offered = std::mem::take(&mut self.offered);
                self.collector.stats.skipped_self += generator.next_cycle(&mut offered);
                for &inj in &offered {
                    self.offer(inj);
                }
                self.offered = offered;
            }
        }

        let mut report = std::mem::take(&mut self.report);
        self.net.step(now, &mut report);
        let mut delivered_data = 0;
        for f in &report.delivered {
            if let Some(latency) = self.collector.on_delivered(f, now) {
                delivered_data += 1;
                if let Some((id, result)) = self.probe.as_mut() {
                    if *id == f.meta.packet_id {
                        *result = Some(latency);
                    }
                }
                if self.trace_level != TraceLevel::Off {
                    self.trace.packets.push(PacketRecord {
                        packet_id: f.meta.packet_id,
                        src: f.meta.source,
                        dst: f.header.dest,
                        inject_cycle: f.meta.inject_cycle,
                        deliver_cycle: now,
                        hops: f.meta.hops,
                    });
                }
            }
        }
        self.collector.on_consumed(report.consumed);
        self.collector.on_dropped(report.dropped);
        self.collector.end_cycle(now);
        if self.trace_level == TraceLevel::Cycles {
            self.trace.cycles.push(CycleRecord {
                cycle: now,
                delivered: delivered_data,
                in_flight: self.collector.in_flight(),
            });
        }
        self.report = report;
        self.cycle += 1;
    }

    fn stuck_packets(&self, limit: usize) -> Vec<u64> {
        let mut flits = Vec::new();
        self.net
            .for_each_flit(|f| flits.push((f.meta.inject_cycle, f.meta.packet_id)));
        flits.sort_unstable();
        flits.into_iter().take(limit).map(|(_, id)| id).collect()
    }

    /// Steps without injection until every flit has left the network.
    pub fn drain(&mut self, cap: u64) -> Result<u64> {
        let was = self.injecting;
        self.injecting = false;
        let pending = self.net.in_flight() + self.outbox_len as u64;
        let diameter = u64::from(self.spec().diameter()).max(1);
        let limit = (10 * diameter * pending.max(1)).min(cap).max(diameter);
        let start = self.cycle;
        while !self.is_idle() {
            if self.cycle - start >= limit {
                self.injecting = was;
                return Err(Error::DrainTimeout {
                    cycles: self.cycle - start,
                    in_flight: self.net.in_flight(),
                    stuck: self.stuck_packets(8),
                });
            }
            self.step();
        }
        self.injecting = was;
        Ok(self.cycle - start)
    }

    /// Sends one probe packet through an otherwise idle network and returns
    /// its latency.
    pub fn measure_latency(&mut self, src: &NodeAddress, dst: &NodeAddress) -> Result<u64> {
        if !self.is_idle() {
            return Err(Error::Config("latency probes need an idle network".into()));
        }
        let dropped_before = self.collector.stats.dropped;
        let id = self.send_data(src, dst, 0)?;
        self.probe = Some((id, None));
        let limit = 1000 + 100 * u64::from(self.spec().diameter());
        for _ in 0..limit {
            self.step();
            if let Some((_, Some(latency))) = self.probe {
                self.probe = None;
                return Ok(latency);
            }
            if self.collector.stats.dropped > dropped_before {
                self.probe = None;
                return Err(Error::Undeliverable { packet_id: id });
            }
        }
        self.probe = None;
        Err(Error::DrainTimeout {
            cycles: limit,
            in_flight: self.net.in_flight(),
            stuck: vec![id],
        })
    }

    /// Steps until all queued and in-flight flits are gone.
    pub fn run_until_idle(&mut self, max_cycles: u64) -> Result<u64> {
        self.drain(max_cycles)
    }
}

/// Runs a full simulation: `cycles` of injection followed by an optional drain.
pub fn run(config: &SimConfig) -> Result<SimStats> {
    run_traced(config).map(|(stats, _)| stats)
}

pub fn run_traced(config: &SimConfig) -> Result<(SimStats, Trace)> {
    let mut sim = Simulation::new(config)?;
    for _ in 0..config.cycles {
        sim.step();
    }
    sim.set_injecting(false);
    if config.drain {
        sim.drain(config.drain_cap)?;
    }
    Ok((sim.stats(), sim.take_trace()))
}

/// Latency of a single packet through an empty network.
pub fn measure_zero_load_latency(
    spec: TopologySpec,
    params: NetworkParams,
    src: &NodeAddress,
    dst: &NodeAddress,
) -> Result<u64> {
    Simulation::idle(spec, params)?.measure_latency(src, dst)
}
