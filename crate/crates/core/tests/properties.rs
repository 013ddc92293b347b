//! Property tests for encodings, traffic patterns and simulator invariants.

use proptest::prelude::*;
use ringmesh_core::address::{address_to_index, index_to_address};
use ringmesh_core::morph::{
    escape_decode, escape_encode, HierarchyLevel, LinkCommand, LogicalWord,
};
use ringmesh_core::traffic::{dest_bit_reversal, dest_transpose, PayloadPolicy};
use ringmesh_core::*;

/// Header packing written out field by field.
fn header_oracle(x: u8, y: u8, r: u8, p: u8, vc: u8) -> u16 {
    (u16::from(x) << 8)
        | (u16::from(y) << 5)
        | (u16::from(r) << 3)
        | (u16::from(p) << 1)
        | u16::from(vc)
}

fn morph_oracle(m: &MorphPayload) -> u32 {
    let hl = u32::from(m.level == HierarchyLevel::Router);
    let mut lc = 0u32;
    for (i, c) in m.links.iter().enumerate() {
        let code = match c {
            LinkCommand::NoChange => 0,
            LinkCommand::Active => 1,
            LinkCommand::Bypass => 2,
            LinkCommand::SwitchOff => 3,
        };
        lc |= code << (2 * i);
    }
    (hl << 31) | (u32::from(m.region_size) << 21) | (lc << 5) | u32::from(m.pe_type)
}

fn link_command() -> impl Strategy<Value = LinkCommand> {
    prop_oneof![
        Just(LinkCommand::NoChange),
        Just(LinkCommand::Active),
        Just(LinkCommand::Bypass),
        Just(LinkCommand::SwitchOff),
    ]
}

fn morph_payload() -> impl Strategy<Value = MorphPayload> {
    (
        any::<bool>(),
        0u16..1024,
        prop::array::uniform8(link_command()),
        0u8..32,
    )
        .prop_map(|(hl, ers, links, pts)| MorphPayload {
            level: if hl {
                HierarchyLevel::Router
            } else {
                HierarchyLevel::RingSwitch
            },
            region_size: ers,
            links,
            pe_type: pts,
        })
        .prop_filter("the all-ones word is reserved", |m| {
            morph_oracle(m) != MORPH_MARKER
        })
}

fn logical_word() -> impl Strategy<Value = LogicalWord> {
    prop_oneof![
        2 => Just(LogicalWord::Data(MORPH_MARKER)),
        2 => any::<u32>().prop_map(LogicalWord::Data),
        1 => morph_payload().prop_map(|m| LogicalWord::Config(morph_oracle(&m))),
    ]
}

proptest! {
    #[test]
    fn header_matches_oracle(x in 0u8..8, y in 0u8..8, r in 0u8..4, p in 0u8..4, vc in 0u8..2) {
        let h = Header::new(NodeAddress::new(x, y, r, p), vc);
        let bits = h.encode().unwrap();
        prop_assert_eq!(bits, header_oracle(x, y, r, p, vc));
        prop_assert_eq!(Header::decode(bits).unwrap(), h);
    }

    #[test]
    fn morph_matches_oracle(m in morph_payload()) {
        let word = encode_morph(&m).unwrap();
        prop_assert_eq!(word, morph_oracle(&m));
        prop_assert_eq!(decode_morph(word).unwrap(), m);
    }

    #[test]
    fn escape_roundtrip(words in prop::collection::vec(logical_word(), 0..64)) {
        let wire = escape_encode(&words).unwrap();
        let markers_in = words.iter().filter(|w| !matches!(w, LogicalWord::Data(d) if *d != MORPH_MARKER)).count();
        prop_assert_eq!(wire.len(), words.len() + markers_in);
        prop_assert_eq!(escape_decode(&wire).unwrap(), words);
    }

    #[test]
    fn pe_index_bijection(rows in 1usize..=8, cols in 1usize..=8, seed in any::<u32>()) {
        let n = rows * cols * 16;
        let i = GlobalPeIndex(seed % n as u32);
        let a = index_to_address(i, rows, cols).unwrap();
        prop_assert_eq!(address_to_index(&a, rows, cols).unwrap(), i);
    }

    #[test]
    fn permutations_are_involutions(bits in 1u32..=10, seed in any::<u32>()) {
        let n = 1u32 << bits;
        let s = seed % n;
        prop_assert_eq!(dest_bit_reversal(dest_bit_reversal(s, n).unwrap(), n).unwrap(), s);
        if bits % 2 == 0 {
            prop_assert_eq!(dest_transpose(dest_transpose(s, n).unwrap(), n).unwrap(), s);
        }
    }
}

fn small_spec() -> impl Strategy<Value = TopologySpec> {
    prop_oneof![
        (1usize..=2, 1usize..=2).prop_map(|(r, c)| TopologySpec::ring_mesh(r, c)),
        (2usize..=5, 2usize..=5).prop_map(|(r, c)| TopologySpec::flat_mesh(r, c)),
    ]
}

fn pattern() -> impl Strategy<Value = Pattern> {
    prop_oneof![
        Just(Pattern::UniformRandom),
        Just(Pattern::Transpose),
        Just(Pattern::BitReversal)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn runs_conserve_flits_and_respect_hop_bound(
        spec in small_spec(),
        pat in pattern(),
        rate in 0.05f64..=1.0,
        seed in any::<u64>(),
        random_payload in any::<bool>(),
    ) {
        let pes = spec.pe_count();
        let pat = if pes.is_power_of_two() { pat } else { Pattern::UniformRandom };
        let mut traffic = TrafficConfig::new(pat, rate, seed);
        if random_payload {
            traffic.payload = PayloadPolicy::Random;
        }
        let mut cfg = SimConfig::new(spec, traffic, 600);
        cfg.trace = TraceLevel::Packets;
        let mut sim = Simulation::new(&cfg).unwrap();
        for _ in 0..cfg.cycles {
            sim.step();
            prop_assert!(sim.conserves_flits());
        }
        sim.drain(1_000_000).unwrap();
        let stats = sim.stats();
        prop_assert_eq!(stats.injected, stats.delivered + stats.dropped);
        prop_assert_eq!(stats.dropped, 0);
        for rec in &sim.trace().packets {
            let hops = spec.zero_load_hops(&rec.src, &rec.dst).unwrap();
            prop_assert!(rec.deliver_cycle - rec.inject_cycle >= u64::from(hops));
            prop_assert_eq!(u32::from(rec.hops), hops);
        }
    }

    #[test]
    fn evaluation_order_does_not_matter(spec in small_spec(), rate in 0.1f64..=1.0, seed in any::<u64>(), order_seed in any::<u64>()) {
        let cfg = SimConfig::new(spec, TrafficConfig::new(Pattern::UniformRandom, rate, seed), 400);
        let mut a = Simulation::new(&cfg).unwrap();
        let mut b = Simulation::new(&cfg).unwrap();
        b.network_mut().shuffle_evaluation(order_seed);
        for _ in 0..cfg.cycles {
            a.step();
            b.step();
        }
        prop_assert_eq!(a.stats(), b.stats());
    }
}

#[test]
fn identical_configs_give_identical_stats() {
    let spec = TopologySpec::ring_mesh(2, 2);
    let cfg = SimConfig::new(
        spec,
        TrafficConfig::new(Pattern::UniformRandom, 0.5, 42),
        3000,
    );
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_eq!(a.delivered_per_cycle, b.delivered_per_cycle);
}

#[test]
fn zero_rate_delivers_nothing() {
    let spec = TopologySpec::ring_mesh(1, 1);
    let s = run(&SimConfig::new(
        spec,
        TrafficConfig::new(Pattern::UniformRandom, 0.0, 1),
        500,
    ))
    .unwrap();
    assert_eq!(s.delivered, 0);
    assert_eq!(s.latency_samples, 0);
}
