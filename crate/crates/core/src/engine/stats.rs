//! Run statistics.

use serde::{Deserialize, Serialize};

use crate::address::{Flit, NodeAddress};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatencyMode {
    /// From entry into the source buffer to delivery.
    #[default]
    Source,
    /// From the first link traversal to delivery.
    Network,
}

/// Aggregate results of a run. Flit counters include control flits; packet
/// counters cover application data only.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub cycles: u64,
    pub warmup: u64,
    /// Cycles spent draining after injection stopped.
    pub drain_cycles: u64,
    pub injected: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
    pub in_flight_max: u64,
    pub packets_injected: u64,
    pub packets_delivered: u64,
    pub control_flits: u64,
    pub skipped_self: u64,
    /// Generated packets refused because the source buffer was full.
    pub throttled: u64,
    pub latency_samples: u64,
    pub avg_latency_cycles: f64,
    pub p99_latency_cycles: u64,
    pub max_latency_cycles: u64,
    /// Data packets delivered per cycle inside the measurement window.
    pub throughput_pkts_per_cycle: f64,
    /// Data packets delivered in each injection cycle.
    #[serde(skip)]
    pub delivered_per_cycle: Vec<u32>,
}

/// One delivered data packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub packet_id: u64,
    pub src: NodeAddress,
    pub dst: NodeAddress,
    pub inject_cycle: u64,
    pub deliver_cycle: u64,
    pub hops: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: u64,
    pub delivered: u32,
    pub in_flight: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceLevel {
    #[default]
    Off,
    Packets,
    Cycles,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub packets: Vec<PacketRecord>,
    pub cycles: Vec<CycleRecord>,
}

#[derive(Clone, Debug)]
pub(crate) struct StatsCollector {
    pub stats: SimStats,
    pub mode: LatencyMode,
    histogram: Vec<u64>,
    latency_sum: u128,
    window_packets: u64,
    delivered_this_cycle: u32,
}

impl StatsCollector {
    pub fn new(cycles: u64, warmup: u64, mode: LatencyMode) -> Self {
        Self {
            stats: SimStats {
                cycles,
                warmup,
                ..SimStats::default()
            },
            mode,
            histogram: Vec::new(),
            latency_sum: 0,
            window_packets: 0,
            delivered_this_cycle: 0,
        }
    }

    fn in_window(&self, cycle: u64) -> bool {
        cycle >= self.stats.warmup && cycle < self.stats.cycles
    }

    pub fn on_injected(&mut self, flit: &Flit) {
        self.stats.injected += 1;
        if flit.meta.control {
            self.stats.control_flits += 1;
        } else {
            self.stats.packets_injected += 1;
        }
    }

    /// Returns the packet latency if the flit is a data packet.
    pub fn on_delivered(&mut self, flit: &Flit, now: u64) -> Option<u64> {
        self.stats.delivered += 1;
        if flit.meta.control {
            return None;
        }
        self.stats.packets_delivered += 1;
        self.delivered_this_cycle += 1;
        if self.in_window(now) {
            self.window_packets += 1;
        }
        let start = match self.mode {
            LatencyMode::Source => flit.meta.inject_cycle,
            LatencyMode::Network if flit.meta.depart_cycle == u64::MAX => flit.meta.inject_cycle,
            LatencyMode::Network => flit.meta.depart_cycle,
        };
        let latency = now - start;
        if self.in_window(flit.meta.inject_cycle) {
            let slot = latency as usize;
            if self.histogram.len() <= slot {
                self.histogram.resize(slot + 1, 0);
            }
            self.histogram[slot] += 1;
            self.latency_sum += u128::from(latency);
            self.stats.latency_samples += 1;
        }
        Some(latency)
    }

    pub fn on_consumed(&mut self, flits: u64) {
        self.stats.delivered += flits;
    }

    pub fn on_dropped(&mut self, flits: u64) {
        self.stats.dropped += flits;
    }

    pub fn in_flight(&self) -> u64 {
        self.stats.injected - self.stats.delivered - self.stats.dropped
    }

    pub fn end_cycle(&mut self, now: u64) {
        let in_flight = self.in_flight();
        self.stats.in_flight_max = self.stats.in_flight_max.max(in_flight);
        if now < self.stats.cycles {
            self.stats
                .delivered_per_cycle
                .push(self.delivered_this_cycle);
        } else {
            self.stats.drain_cycles += 1;
        }
        self.delivered_this_cycle = 0;
    }

    pub fn snapshot(&self) -> SimStats {
        let mut s = self.stats.clone();
        s.in_flight = self.in_flight();
        if s.latency_samples > 0 {
            s.avg_latency_cycles = self.latency_sum as f64 / s.latency_samples as f64;
            let rank = (s.latency_samples * 99).div_ceil(100);
            let mut seen = 0;
            for (latency, &count) in self.histogram.iter().enumerate() {
                seen += count;
                if seen >= rank {
                    s.p99_latency_cycles = latency as u64;
                    break;
                }
            }
            s.max_latency_cycles = (self.histogram.len() - 1) as u64;
        }
        let window = s.cycles.saturating_sub(s.warmup);
        if window > 0 {
            s.throughput_pkts_per_cycle = self.window_packets as f64 / window as f64;
        }
        s
    }
}
