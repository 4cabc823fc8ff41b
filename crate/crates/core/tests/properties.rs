//! Property tests over the invariants that must hold for arbitrary inputs.

use std::collections::BTreeMap;

use proptest::prelude::*;

use crosscheck::graphs::builtin_graph;
use crosscheck::patterns::{
    canonical_angle, compile_to_circuit, rewrite_angles, AngleSet, RandomizationBits,
};
use crosscheck::simulator::{apply_noise, exact_distribution, NoiseModel, OutcomeDistribution};

fn angle_close(a: f64, b: f64) -> bool {
    let d = canonical_angle(a - b);
    d < 1e-9 || (std::f64::consts::TAU - d) < 1e-9
}

proptest! {
    #[test]
    fn canonical_angles_stay_in_range(x in -50.0f64..50.0) {
        let a = canonical_angle(x);
        prop_assert!((0.0..std::f64::consts::TAU).contains(&a));
        prop_assert!(angle_close(a, x));
    }

    #[test]
    fn rewrite_is_involutive_for_arbitrary_angles(
        raw in proptest::collection::vec(-10.0f64..10.0, 6),
        k_bits in proptest::collection::vec(0u8..2, 6),
        r_bits in proptest::collection::vec(0u8..2, 3),
    ) {
        let (g, flows) = builtin_graph("H6").unwrap();
        let flow = &flows[1].flow;
        let angles = AngleSet::new((1..=6).zip(raw.iter().copied()).collect());
        let bits = RandomizationBits {
            k: (1..=6).zip(k_bits.iter().copied()).collect(),
            r: [2u32, 5, 6].into_iter().zip(r_bits.iter().copied()).collect(),
        };
        let once = rewrite_angles(&g, flow, &angles, &bits).unwrap();
        let twice = rewrite_angles(&g, flow, &once, &bits).unwrap();
        for (v, a) in angles.iter() {
            prop_assert!(angle_close(twice.get(v).unwrap(), a));
        }
    }

    #[test]
    fn distributions_and_noise_stay_normalized(
        raw in proptest::collection::vec(0.0f64..std::f64::consts::TAU, 6),
        lambda in 0.0f64..=1.0,
        flips in proptest::collection::vec(0.0f64..=0.5, 3),
    ) {
        let (g, flows) = builtin_graph("H6").unwrap();
        for nf in &flows {
            let angles = AngleSet::new((1..=6).zip(raw.iter().copied()).collect());
            let circuit = compile_to_circuit(&g, &nf.flow, &angles).unwrap();
            let dist = exact_distribution(&circuit).unwrap();
            prop_assert!((dist.total() - 1.0).abs() < 1e-10);
            let noise = NoiseModel {
                depolarizing_strength: lambda,
                readout_flip: flips.clone(),
                seed: 0,
            };
            let noisy = apply_noise(&dist, &noise);
            prop_assert!((noisy.total() - 1.0).abs() < 1e-10);
            prop_assert!(noisy.probs.iter().all(|&p| (-1e-12..=1.0 + 1e-12).contains(&p)));
        }
    }

    #[test]
    fn collision_probability_bounds(
        weights in proptest::collection::vec(0.0f64..1.0, 8)
    ) {
        let total: f64 = weights.iter().sum();
        prop_assume!(total > 1e-9);
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let dist = OutcomeDistribution { n_bits: 3, probs };
        let cp = dist.collision_probability();
        prop_assert!(cp >= 1.0 / 8.0 - 1e-12);
        prop_assert!(cp <= 1.0 + 1e-12);
    }
}

#[test]
fn counts_relabeling_is_involutive() {
    let (g, flows) = builtin_graph("H6").unwrap();
    let angles = AngleSet::uniform(&g, 0.9);
    let circuit = compile_to_circuit(&g, &flows[1].flow, &angles).unwrap();
    let table =
        crosscheck::simulator::sample(&circuit, 500, &NoiseModel::ideal(), 3, "d", "j").unwrap();
    let mask = vec![1, 0, 1];
    assert_eq!(table.xor_relabel(&mask).xor_relabel(&mask), table);
    let dist = exact_distribution(&circuit).unwrap();
    let back = dist.xor_relabel(&mask).xor_relabel(&mask);
    for (a, b) in dist.probs.iter().zip(&back.probs) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn rewrites_compose_by_xor() {
    let (g, flows) = builtin_graph("H6").unwrap();
    let flow = &flows[1].flow;
    let angles = AngleSet::new(BTreeMap::from([
        (1, 0.3),
        (2, 1.7),
        (3, 2.9),
        (4, 4.1),
        (5, 5.3),
        (6, 0.1),
    ]));
    for seed in 0..20u64 {
        let b1 = RandomizationBits::random(&g, flow, seed);
        let b2 = RandomizationBits::random(&g, flow, seed + 1000);
        let chained =
            rewrite_angles(&g, flow, &rewrite_angles(&g, flow, &angles, &b1).unwrap(), &b2)
                .unwrap();
        let xored = RandomizationBits {
            k: b1.k.iter().map(|(&v, &x)| (v, x ^ b2.k[&v])).collect(),
            r: b1.r.iter().map(|(&v, &x)| (v, x ^ b2.r[&v])).collect(),
        };
        let direct = rewrite_angles(&g, flow, &angles, &xored).unwrap();
        for (v, _) in angles.iter() {
            assert!(angle_close(chained.get(v).unwrap(), direct.get(v).unwrap()));
        }
    }
}
