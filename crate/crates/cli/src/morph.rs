//! Morph plan files and their in-band execution.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use ringmesh_core::morph::HierarchyLevel;
use ringmesh_core::{
    encode_morph, GlobalPeIndex, LinkState, MorphPayload, NetworkParams, NodeAddress, RegionPlan,
    Simulation, TopologySpec,
};

/// One plan line: `dest=x.y.r.p hl=<0|1> ers=<n> lc=<hex> pts=<hex>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlanLine {
    pub dest: NodeAddress,
    pub morph: MorphPayload,
}

fn parse_hex(s: &str) -> Result<u32> {
    let digits = s.trim_start_matches("0x").trim_start_matches("0X");
    u32::from_str_radix(digits, 16).map_err(|e| anyhow!("bad hex value {s:?}: {e}"))
}

impl PlanLine {
    pub fn parse(line: &str) -> Result<Self> {
        let (mut dest, mut hl, mut ers, mut lc, mut pts) = (None, None, None, None, None);
        for field in line.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| anyhow!("expected key=value, got {field:?}"))?;
            match key {
                "dest" => dest = Some(value.parse::<NodeAddress>()?),
                "hl" => {
                    hl = Some(match value {
                        "0" => HierarchyLevel::RingSwitch,
                        "1" => HierarchyLevel::Router,
                        _ => bail!("hl must be 0 or 1, got {value:?}"),
                    })
                }
                "ers" => {
                    ers = Some(
                        value
                            .parse::<u16>()
                            .map_err(|e| anyhow!("ers={value}: {e}"))?,
                    )
                }
                "lc" => {
                    let v = parse_hex(value)?;
                    lc = Some(u16::try_from(v).map_err(|_| anyhow!("lc={value} exceeds 16 bits"))?);
                }
                "pts" => {
                    let v = parse_hex(value)?;
                    pts = Some(u8::try_from(v).map_err(|_| anyhow!("pts={value} exceeds 5 bits"))?);
                }
                other => bail!("unknown plan field {other:?}"),
            }
        }
        let missing = |name: &str| anyhow!("plan line lacks {name}=");
        let morph = MorphPayload {
            level: hl.ok_or_else(|| missing("hl"))?,
            region_size: ers.unwrap_or(0),
            pe_type: pts.unwrap_or(0),
            ..MorphPayload::default()
        }
        .with_link_config_bits(lc.ok_or_else(|| missing("lc"))?);
        encode_morph(&morph)?;
        Ok(Self {
            dest: dest.ok_or_else(|| missing("dest"))?,
            morph,
        })
    }

    pub fn render(&self) -> String {
        let hl = match self.morph.level {
            HierarchyLevel::RingSwitch => 0,
            HierarchyLevel::Router => 1,
        };
        format!(
            "dest={} hl={hl} ers={} lc={:04x} pts={:02x}",
            self.dest,
            self.morph.region_size,
            self.morph.link_config_bits(),
            self.morph.pe_type
        )
    }
}

pub fn parse_plan(text: &str) -> Result<Vec<PlanLine>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(n, l)| PlanLine::parse(l).with_context(|| format!("plan line {}", n + 1)))
        .collect()
}

pub fn plan_lines(plan: &RegionPlan) -> Vec<PlanLine> {
    plan.morphs
        .iter()
        .map(|&(dest, morph)| PlanLine { dest, morph })
        .collect()
}

fn state_code(s: LinkState) -> char {
    match s {
        LinkState::Active => 'A',
        LinkState::Bypass => 'B',
        LinkState::SwitchedOff => 'O',
    }
}

fn states_string(states: &[LinkState]) -> String {
    states.iter().map(|&s| state_code(s)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct MorphResult {
    pub dest: String,
    pub hl: u8,
    /// Port states of the target after the run, one letter per port:
    /// A active, B bypass, O switched off.
    pub link_states: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExecReport {
    pub source: String,
    pub cycles: u64,
    pub control_flits: u64,
    pub dropped: u64,
    pub reachable_pes: usize,
    pub total_pes: usize,
    pub morphs: Vec<MorphResult>,
}

/// Sends every morph from `source`, runs until idle, then probes which PEs
/// `source` can still reach.
pub fn execute(spec: TopologySpec, source: NodeAddress, plan: &[PlanLine]) -> Result<ExecReport> {
    let mut sim = Simulation::idle(spec, NetworkParams::default())?;
    for line in plan {
        sim.send_morph(&source, &line.dest, &line.morph)?;
    }
    let limit = 1_000 + 100 * plan.len() as u64 * u64::from(spec.diameter());
    sim.run_until_idle(limit)?;
    let stats = sim.stats();
    let (cycles, control_flits, dropped) = (sim.cycle(), stats.control_flits, stats.dropped);

    let mut reachable = 0;
    for i in 0..spec.pe_count() {
        let dst = spec.index_to_address(GlobalPeIndex(i as u32))?;
        if dst == source || sim.measure_latency(&source, &dst).is_ok() {
            reachable += 1;
        }
    }

    let net = sim.network();
    let morphs = plan
        .iter()
        .map(|line| {
            let (hl, states) = match line.morph.level {
                HierarchyLevel::Router => (
                    1,
                    net.router(line.dest.block())
                        .map(|r| states_string(r.link_states())),
                ),
                HierarchyLevel::RingSwitch => (
                    0,
                    net.switch(&line.dest)
                        .map(|s| states_string(s.link_states())),
                ),
            };
            Ok(MorphResult {
                dest: line.dest.to_string(),
                hl,
                link_states: states?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ExecReport {
        source: source.to_string(),
        cycles,
        control_flits,
        dropped,
        reachable_pes: reachable,
        total_pes: spec.pe_count(),
        morphs,
    })
}

impl ExecReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("dest,hl,link_states\n");
        for m in &self.morphs {
            let _ = writeln!(s, "{},{},{}", m.dest, m.hl, m.link_states);
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "{} morphs from {} settled in {} cycles ({} control flits, {} dropped); {}/{} PEs reachable",
            self.morphs.len(),
            self.source,
            self.cycles,
            self.control_flits,
            self.dropped,
            self.reachable_pes,
            self.total_pes
        )
    }
}
