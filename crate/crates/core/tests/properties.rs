//! Randomized invariants across the whole pipeline: output bounds,
//! permutation equivariance, gradient agreement with finite differences,
//! topology monotonicity, determinism, and serialization round-trips.

use proptest::prelude::*;

use regnn_core::channel::{sample_episode, split_episode, ChannelConfig};
use regnn_core::linalg::{permute_vec, Matrix};
use regnn_core::objective::{rate_gradient, slot_sum_rate};
use regnn_core::oracles::{fd_tap_gradient, relu_margin, slot_tap_gradient};
use regnn_core::regnn::{forward, normalize_channel, RegnnParams};
use regnn_core::topology::{generate_drop, TopologyConfig};

fn square_entries(k: usize, range: std::ops::Range<f64>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(range, k), k)
}

fn permutation(k: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..k).collect::<Vec<usize>>()).prop_shuffle()
}

fn tap_rows(layers: usize, order: usize, bound: f64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec(-bound..bound, order),
        layers,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_outputs_stay_inside_the_budget(
        k in 2usize..=12,
        rows in (2usize..=12).prop_flat_map(|k| square_entries(k, 0.0..3.0)),
        taps in tap_rows(2, 3, 10.0),
    ) {
        let k = k.min(rows.len());
        let rows: Vec<Vec<f64>> = rows[..k].iter().map(|r| r[..k].to_vec()).collect();
        let h = Matrix::from_rows(&rows).unwrap();
        let (input, _) = normalize_channel(&h);
        let params = RegnnParams::from_rows(&taps).unwrap();
        let pmax = 2.5;
        let trace = forward(&params, &input, &vec![pmax; k]).unwrap();
        for p in &trace.output {
            prop_assert!((0.0..=pmax).contains(p), "power {p} escapes [0, {pmax}]");
        }
    }

    #[test]
    fn permuting_the_network_permutes_the_powers(
        (rows, perm) in (2usize..=8)
            .prop_flat_map(|k| (square_entries(k, 0.0..2.0), permutation(k))),
        taps in tap_rows(2, 3, 2.0),
    ) {
        let h = Matrix::from_rows(&rows).unwrap();
        let k = h.n();
        let params = RegnnParams::from_rows(&taps).unwrap();
        let p_max = vec![1.0; k];
        let direct = forward(&params, &h, &p_max).unwrap().output;
        let relabeled = forward(&params, &h.permuted(&perm), &p_max).unwrap().output;
        let expected = permute_vec(&direct, &perm);
        for (a, b) in relabeled.iter().zip(&expected) {
            prop_assert!(
                (a - b).abs() <= 1e-12 * a.abs().max(1.0),
                "relabeled {a} vs permuted {b}"
            );
        }
    }

    #[test]
    fn rate_gradients_match_finite_differences(
        rows in (2usize..=8).prop_flat_map(|k| square_entries(k, 0.0..2.0)),
        fractions in prop::collection::vec(0.1..0.9f64, 8),
    ) {
        let h = Matrix::from_rows(&rows).unwrap();
        let k = h.n();
        let pmax = 3.2e-4;
        let noise = 1e-7;
        let p: Vec<f64> = fractions[..k].iter().map(|f| f * pmax).collect();
        let grad = rate_gradient(&h, &p, noise).unwrap();
        let step = 3e-5 * pmax;
        for j in 0..k {
            let mut plus = p.clone();
            plus[j] += step;
            let mut minus = p.clone();
            minus[j] -= step;
            let fd = (slot_sum_rate(&h, &plus, noise).unwrap()
                - slot_sum_rate(&h, &minus, noise).unwrap())
                / (2.0 * step);
            prop_assert!(
                (grad[j] - fd).abs() / fd.abs().max(1.0) < 1e-6,
                "link {j}: analytic {} vs fd {fd}",
                grad[j]
            );
        }
    }

    #[test]
    fn growing_the_radius_only_adds_neighbors(
        k in 2usize..=12,
        seed in 0u64..1000,
        r_lo in 0.5..10.0f64,
        r_hi in 10.0..40.0f64,
    ) {
        let small = generate_drop(&TopologyConfig::new(k, r_lo, seed).unwrap(), 0).unwrap();
        let big = generate_drop(&TopologyConfig::new(k, r_hi, seed).unwrap(), 0).unwrap();
        for j in 0..k {
            for target in 0..k {
                if small.is_neighbor(j, target) {
                    prop_assert!(big.is_neighbor(j, target));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tap_gradients_match_finite_differences(
        k in 2usize..=8,
        seed in 0u64..10_000,
    ) {
        let drop = generate_drop(&TopologyConfig::new(k, 4.0, seed).unwrap(), 0).unwrap();
        let cfg = ChannelConfig { slots: 1, seed, ..ChannelConfig::default() };
        let ep = sample_episode::<f64>(&drop, &cfg).unwrap();
        let (input, _) = normalize_channel(&ep.matrices[0]);
        let p_max = ep.max_power_vec();
        let params = RegnnParams::init_uniform(2, 4, seed).unwrap();
        let trace = forward(&params, &input, &p_max).unwrap();
        // Near a ReLU kink the objective is not differentiable; skip.
        prop_assume!(relu_margin(&trace) > 1e-2);
        let analytic = slot_tap_gradient(&params, &input, &ep.matrices[0], &p_max, ep.noise()).unwrap();
        let fd = fd_tap_gradient(&params, &input, &ep.matrices[0], &p_max, ep.noise(), 1e-4).unwrap();
        // Whole-vector relative error; a single component at the
        // finite-difference noise floor must not dominate, and a vanishing
        // gradient (dead hidden layer) supports no relative comparison.
        let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(norm > 3e-4);
        let dist: f64 = analytic
            .taps()
            .iter()
            .zip(&fd)
            .map(|(a, f)| (a - f) * (a - f))
            .sum::<f64>()
            .sqrt();
        prop_assert!(dist / norm < 1e-5, "gradient error {dist} on norm {norm}");
    }

    #[test]
    fn generation_is_deterministic_in_every_seed(
        k in 2usize..=8,
        seed in 0u64..10_000,
        period in 0u64..50,
    ) {
        let topo = TopologyConfig::new(k, 5.0, seed).unwrap();
        let a = generate_drop(&topo, period).unwrap();
        let b = generate_drop(&topo, period).unwrap();
        prop_assert_eq!(&a.tx, &b.tx);
        prop_assert_eq!(&a.rx, &b.rx);
        let cfg = ChannelConfig { slots: 3, seed, ..ChannelConfig::default() };
        let ea = sample_episode::<f64>(&a, &cfg).unwrap();
        let eb = sample_episode::<f64>(&b, &cfg).unwrap();
        prop_assert_eq!(ea, eb);
    }

    #[test]
    fn disk_round_trips_preserve_every_field(
        k in 2usize..=8,
        seed in 0u64..10_000,
        taps in tap_rows(2, 4, 1.0),
    ) {
        let drop = generate_drop(&TopologyConfig::new(k, 5.0, seed).unwrap(), 0).unwrap();
        let text = drop.to_text();
        let parsed = regnn_core::topology::NetworkDrop::read_text(&mut text.as_bytes()).unwrap();
        prop_assert_eq!(&parsed.tx, &drop.tx);
        prop_assert_eq!(&parsed.rx, &drop.rx);
        prop_assert_eq!(&parsed.neighbors, &drop.neighbors);

        let cfg = ChannelConfig { slots: 2, seed, ..ChannelConfig::default() };
        let ep = sample_episode::<f64>(&drop, &cfg).unwrap();
        let mut buf = Vec::new();
        ep.write_binary(&mut buf).unwrap();
        let back = regnn_core::channel::ChannelEpisode::read_binary(&mut buf.as_slice(), drop).unwrap();
        prop_assert_eq!(&back.matrices, &ep.matrices);

        let params = RegnnParams::from_rows(&taps).unwrap();
        let mut ckpt = Vec::new();
        params.write_checkpoint(&mut ckpt).unwrap();
        let restored = RegnnParams::<f64>::read_checkpoint(&mut ckpt.as_slice()).unwrap();
        prop_assert_eq!(restored.taps(), params.taps());
    }

    #[test]
    fn splits_partition_the_leading_slots(
        slots in 4usize..=20,
        n_train in 1usize..=10,
        n_test in 1usize..=10,
    ) {
        prop_assume!(n_train + n_test <= slots);
        let drop = generate_drop(&TopologyConfig::new(3, 5.0, 7).unwrap(), 0).unwrap();
        let cfg = ChannelConfig { slots, seed: 7, ..ChannelConfig::default() };
        let ep = split_episode(sample_episode::<f64>(&drop, &cfg).unwrap(), n_train, n_test).unwrap();
        prop_assert_eq!(ep.train_slots.len(), n_train);
        prop_assert_eq!(ep.test_slots.len(), n_test);
        for t in &ep.train_slots {
            prop_assert!(!ep.test_slots.contains(t));
        }
        let all: Vec<usize> = ep.train_slots.iter().chain(&ep.test_slots).copied().collect();
        prop_assert!(all.iter().all(|t| *t < slots));
    }
}
