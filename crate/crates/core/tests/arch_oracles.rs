mod oracles;

use std::time::Instant;

use diswot_core::arch::{
    build_network, count_flops, count_params, enumerate_s0, mutate, parse_nb201, sample_random, serialize_nb201,
    ArchDescriptor, ArchJson, Constraints, Nb201Cell, Nb201Op, SearchSpace, SpaceKind,
};
use diswot_core::rng::stream_rng;
use diswot_core::tensor::InitSpec;
use proptest::prelude::*;

#[test]
fn s0_param_goldens() {
    let start = Instant::now();
    let space = SearchSpace::s0();
    for (d, k) in oracles::S0_PARAM_GOLDENS {
        let p = count_params(&ArchDescriptor::s0(d[0], d[1], d[2]), &space).unwrap();
        let got = p as f64 / 1000.0;
        assert!((got - k).abs() <= 0.01, "{d:?}: {got} K vs {k} K");
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn closed_form_counts_match_built_networks() {
    let s0 = SearchSpace::s0();
    for d in enumerate_s0() {
        let net = build_network(&d, &s0, &InitSpec::kaiming(0)).unwrap();
        assert_eq!(net.parameter_count(), count_params(&d, &s0).unwrap(), "{d}");
    }
    let s2 = SearchSpace::s2_cifar();
    let mut rng = stream_rng(50, 0);
    for _ in 0..50 {
        let d = sample_random(&s2, &mut rng).unwrap();
        let net = build_network(&d, &s2, &InitSpec::kaiming(0)).unwrap();
        assert_eq!(net.parameter_count(), count_params(&d, &s2).unwrap(), "{d}");
    }
    let nb = SearchSpace::nb201();
    for s in oracles::NB201_CELLS {
        let d = ArchDescriptor::Nb201(parse_nb201(s).unwrap());
        let net = build_network(&d, &nb, &InitSpec::kaiming(0)).unwrap();
        assert_eq!(net.parameter_count(), count_params(&d, &nb).unwrap(), "{d}");
    }
}

#[test]
fn nb201_published_cells_round_trip() {
    for s in oracles::NB201_CELLS {
        let cell = parse_nb201(s).unwrap();
        assert_eq!(serialize_nb201(&cell), s);
    }
}

#[test]
fn nb201_rejects_malformed() {
    let good = oracles::NB201_CELLS[0];
    for bad in [
        "",
        &good[1..],
        &good[..good.len() - 1],
        "|skip_connect~0|+|nor_conv_3x3~0|skip_connect~1|",
        "|skip_connect~1|+|nor_conv_3x3~0|skip_connect~1|+|nor_conv_3x3~0|nor_conv_1x1~1|avg_pool_3x3~2|",
        "|conv~0|+|nor_conv_3x3~0|skip_connect~1|+|nor_conv_3x3~0|nor_conv_1x1~1|avg_pool_3x3~2|",
        "|skip_connect~0|+|nor_conv_3x3~0|skip_connect~1|+|nor_conv_3x3~0|nor_conv_1x1~1|avg_pool_3x3~2|+|",
    ] {
        assert!(parse_nb201(bad).is_err(), "{bad:?}");
    }
}

#[test]
fn s0_flops_grow_with_depth() {
    let space = SearchSpace::s0();
    let input = space.default_input(1);
    let small = count_flops(&ArchDescriptor::s0(1, 1, 1), &space, input).unwrap();
    let big = count_flops(&ArchDescriptor::s0(7, 7, 7), &space, input).unwrap();
    assert!(big > small);
    let batched = count_flops(&ArchDescriptor::s0(1, 1, 1), &space, space.default_input(4)).unwrap();
    assert_eq!(batched, 4 * small);
}

fn nb201_op() -> impl Strategy<Value = Nb201Op> {
    prop::sample::select(Nb201Op::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn nb201_serialize_parse_round_trip(ops in prop::array::uniform6(nb201_op())) {
        let cell = Nb201Cell::new(ops);
        let s = serialize_nb201(&cell);
        prop_assert_eq!(parse_nb201(&s).unwrap(), cell);
    }

    #[test]
    fn arch_ids_and_json_round_trip(seed in any::<u64>(), kind in prop::sample::select(vec![
        SpaceKind::S0, SpaceKind::Nb201, SpaceKind::S2Cifar, SpaceKind::S2Imagenet,
    ])) {
        let space = SearchSpace::from_kind(kind);
        let d = sample_random(&space, &mut stream_rng(seed, 0)).unwrap();
        prop_assert_eq!(&ArchDescriptor::from_arch_id(kind, &d.arch_id()).unwrap(), &d);
        let json = ArchJson::from_descriptor(kind, &d).unwrap().to_json_string();
        let (k2, d2) = ArchJson::parse(&json).unwrap();
        prop_assert_eq!(k2, kind);
        prop_assert_eq!(d2, d);
    }

    #[test]
    fn parsers_never_panic(s in ".{0,120}") {
        let _ = parse_nb201(&s);
        let _ = ArchJson::parse(&s);
        for kind in [SpaceKind::S0, SpaceKind::Nb201, SpaceKind::S2Cifar] {
            let _ = ArchDescriptor::from_arch_id(kind, &s);
        }
    }
}

#[test]
fn mutation_stays_in_space() {
    let max_params = 600_000;
    for kind in [SpaceKind::S0, SpaceKind::Nb201, SpaceKind::S2Cifar, SpaceKind::S2Imagenet] {
        let space = SearchSpace::from_kind(kind);
        let mut rng = stream_rng(kind as u64, 1);
        let mut d = sample_random(&space, &mut rng).unwrap();
        for _ in 0..10_000 / 4 {
            let child = mutate(&d, &space, &mut rng).unwrap();
            space.validate(&child).unwrap();
            d = child;
        }
    }
    // Constrained sampling only returns satisfying candidates.
    let space = SearchSpace::s0().with_constraints(Constraints {
        max_params: Some(max_params),
        ..Constraints::default()
    });
    let mut rng = stream_rng(3, 0);
    for _ in 0..200 {
        let d = sample_random(&space, &mut rng).unwrap();
        assert!(count_params(&d, &space).unwrap() <= max_params);
    }
}

#[test]
fn builder_is_deterministic() {
    let space = SearchSpace::s0();
    let d = ArchDescriptor::s0(3, 1, 5);
    let a = build_network(&d, &space, &InitSpec::kaiming(42)).unwrap();
    let b = build_network(&d, &space, &InitSpec::kaiming(42)).unwrap();
    let c = build_network(&d, &space, &InitSpec::kaiming(43)).unwrap();
    let collect = |n: &diswot_core::arch::NetworkInstance| {
        let mut v = Vec::new();
        n.visit_weights(|_, t| v.extend_from_slice(t.data()));
        v
    };
    assert_eq!(collect(&a), collect(&b));
    assert_ne!(collect(&a), collect(&c));
}
