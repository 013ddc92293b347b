//! Synthetic traffic: injection processes, destination patterns and payloads.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::address::MORPH_MARKER;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pattern {
    UniformRandom,
    BitReversal,
    Transpose,
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::UniformRandom => "uniform",
            Pattern::BitReversal => "bitrev",
            Pattern::Transpose => "transpose",
        })
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" | "uniform-random" | "random" => Ok(Pattern::UniformRandom),
            "bitrev" | "bit-reversal" | "bitreversal" => Ok(Pattern::BitReversal),
            "transpose" => Ok(Pattern::Transpose),
            _ => Err(Error::Config(format!("unknown traffic pattern `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PayloadPolicy {
    /// A per-run counter; the marker value is skipped.
    #[default]
    Sequential,
    /// Uniform random words with the marker value folded to `0xFFFF_FFFE`.
    Random,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum InjectionMode {
    /// Each PE injects independently with probability `rate`.
    #[default]
    Bernoulli,
    /// Exactly `floor(rate * N)` distinct PEs inject every cycle.
    ExactCount,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficConfig {
    pub pattern: Pattern,
    /// Fraction of PEs injecting per cycle. Zero disables injection.
    pub injection_rate: f64,
    pub seed: u64,
    pub payload: PayloadPolicy,
    pub injection: InjectionMode,
}

impl TrafficConfig {
    pub fn new(pattern: Pattern, injection_rate: f64, seed: u64) -> Self {
        Self {
            pattern,
            injection_rate,
            seed,
            payload: PayloadPolicy::default(),
            injection: InjectionMode::default(),
        }
    }

    pub fn validate(&self, pes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.injection_rate) {
            return Err(Error::Config(format!(
                "injection rate {} is outside [0, 1]",
                self.injection_rate
            )));
        }
        if pes < 2 {
            return Err(Error::Config("traffic needs at least two PEs".into()));
        }
        if self.pattern != Pattern::UniformRandom && !pes.is_power_of_two() {
            return Err(Error::Config(format!(
                "{} traffic needs a power-of-two PE count, got {pes}",
                self.pattern
            )));
        }
        Ok(())
    }
}

/// Indices of the PEs injecting this cycle, in increasing order.
pub fn select_injectors<R: Rng>(
    rng: &mut R,
    n: u32,
    rate: f64,
    mode: InjectionMode,
    out: &mut Vec<u32>,
) {
    out.clear();
    if rate <= 0.0 {
        return;
    }
    if rate >= 1.0 {
        out.extend(0..n);
        return;
    }
    match mode {
        InjectionMode::Bernoulli => out.extend((0..n).filter(|_| rng.gen::<f64>() < rate)),
        InjectionMode::ExactCount => {
            let k = (rate * f64::from(n)).floor() as usize;
            out.extend(sample(rng, n as usize, k).into_iter().map(|i| i as u32));
            out.sort_unstable();
        }
    }
}

/// Uniformly random destination other than `src`.
pub fn dest_uniform<R: Rng>(rng: &mut R, src: u32, n: u32) -> u32 {
    let d = rng.gen_range(0..n - 1);
    if d >= src {
        d + 1
    } else {
        d
    }
}

fn index_bits(n: u32) -> Result<u32> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Config(format!(
            "pattern needs a power-of-two PE count, got {n}"
        )));
    }
    Ok(n.trailing_zeros())
}

/// Reverses the `log2(n)` index bits of `src`.
pub fn dest_bit_reversal(src: u32, n: u32) -> Result<u32> {
    let bits = index_bits(n)?;
    Ok(src.reverse_bits() >> (32 - bits))
}

/// Rotates the `log2(n)` index bits of `src` left by half their width,
/// swapping the high and low halves of the index.
pub fn dest_transpose(src: u32, n: u32) -> Result<u32> {
    let bits = index_bits(n)?;
    let half = bits / 2;
    if half == 0 {
        return Ok(src);
    }
    let mask = n - 1;
    Ok(((src << half) | (src >> (bits - half))) & mask)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Injection {
    pub src: u32,
    pub dst: u32,
    pub payload: u32,
}

/// Seeded per-cycle traffic source. Draws never depend on network state,
/// so a seed fixes the offered load exactly.
#[derive(Clone, Debug)]
pub struct TrafficGenerator {
    config: TrafficConfig,
    pes: u32,
    rng: ChaCha8Rng,
    counter: u32,
    injectors: Vec<u32>,
}

impl TrafficGenerator {
    pub fn new(config: TrafficConfig, pes: usize) -> Result<Self> {
        config.validate(pes)?;
        Ok(Self {
            config,
            pes: pes as u32,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            counter: 0,
            injectors: Vec::with_capacity(pes),
        })
    }

    pub fn config(&self) -> &TrafficConfig {
        &self.config
    }

    fn payload(&mut self) -> u32 {
        match self.config.payload {
            PayloadPolicy::Sequential => {
                let p = self.counter;
                self.counter = self.counter.wrapping_add(1);
                if self.counter == MORPH_MARKER {
                    self.counter = 0;
                }
                p
            }
            PayloadPolicy::Random => {
                let p: u32 = self.rng.gen();
                if p == MORPH_MARKER {
                    MORPH_MARKER - 1
                } else {
                    p
                }
            }
        }
    }

    /// Packets offered this cycle. Returns the number of self-addressed
    /// packets that were skipped.
    pub fn next_cycle(&mut self, out: &mut Vec<Injection>) -> u64 {
        out.clear();
        let mut injectors = std::mem::take(&mut self.injectors);
        select_injectors(
            &mut self.rng,
            self.pes,
            self.config.injection_rate,
            self.config.injection,
            &mut injectors,
        );
        let mut skipped = 0;
        for &src in &injectors {
            let dst = match self.config.pattern {
                Pattern::UniformRandom => dest_uniform(&mut self.rng, src, self.pes),
                Pattern::BitReversal => dest_bit_reversal(src, self.pes).expect("validated"),
                Pattern::Transpose => dest_transpose(src, self.pes).expect("validated"),
            };
            let payload = self.payload();
            if dst == src {
                skipped += 1;
                continue;
            }
            out.push(Injection { src, dst, payload });
        }
        self.injectors = injectors;
        skipped
    }
}
