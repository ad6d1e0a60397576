use std::collections::BTreeSet;

use nbhd_ldp::measures::{
    marginal_symbol, pair_projection, poi_mass, quantize_targets, relative_entropy, total_variation, Alphabet,
    LocalProfile, NeighbourhoodMeasure, PairMeasure, QuantizedTargets, SymbolMeasure,
};
use nbhd_ldp::rng::stream_rng;
use nbhd_ldp::samplers::{sample_allocation, sample_conditional_graph, sample_coupled, ColoredGraph};
use nbhd_ldp::ExtReal;
use proptest::prelude::*;

/// Feasible two-color targets on `n` vertices.
fn targets() -> impl Strategy<Value = QuantizedTargets> {
    (6u64..40)
        .prop_flat_map(|n| (Just(n), 1..n))
        .prop_flat_map(|(n, k0)| {
            let k1 = n - k0;
            let cap00 = k0 * (k0 - 1) / 2;
            let cap11 = k1 * k1.saturating_sub(1) / 2;
            (
                Just((n, k0, k1)),
                0..=cap00.min(12),
                0..=(k0 * k1).min(12),
                0..=cap11.min(12),
            )
        })
        .prop_map(|((n, k0, k1), e00, e01, e11)| {
            QuantizedTargets::new(Alphabet::standard(2), n, vec![k0, k1], vec![2 * e00, e01, e01, 2 * e11]).unwrap()
        })
}

fn assert_graph_identities(g: &ColoredGraph) {
    let m = g.empirical_measures();
    assert!(m.projections_agree());
    let nbhd = g.neighbourhood();
    assert_eq!(nbhd.symbol_counts(), g.symbol_counts());
    assert_eq!(nbhd.pair_counts(), g.pair_counts());
    // ‖L²‖ = 2|E| / n
    let total: u64 = g.pair_counts().iter().sum();
    assert_eq!(total, 2 * g.edges().len() as u64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conditional_graph_hits_targets(t in targets(), seed in any::<u64>()) {
        let g = sample_conditional_graph(&t, &mut stream_rng(seed, &[1])).unwrap();
        assert_graph_identities(&g);
        prop_assert!(g.neighbourhood().matches_targets(&t));
        prop_assert_eq!(g.symbol_counts(), t.symbol_counts().to_vec());
        prop_assert_eq!(g.pair_counts(), t.ball_counts().to_vec());
    }

    #[test]
    fn allocation_hits_targets(t in targets(), seed in any::<u64>()) {
        let y = sample_allocation(&t, &mut stream_rng(seed, &[2])).unwrap();
        let occ = y.occupancy();
        prop_assert!(occ.matches_targets(&t));
        prop_assert_eq!(occ.pair_counts(), t.ball_counts().to_vec());
    }

    #[test]
    fn coupling_components_hit_targets(t in targets(), seed in any::<u64>()) {
        let s = sample_coupled(&t, &mut stream_rng(seed, &[3])).unwrap();
        assert_graph_identities(&s.graph);
        prop_assert!(s.graph.neighbourhood().matches_targets(&t));
        prop_assert!(s.allocation.occupancy().matches_targets(&t));
        prop_assert!(s.distance() <= s.distance_bound() + 1e-12);
    }

    #[test]
    fn fixed_seed_reproduces(t in targets(), seed in any::<u64>()) {
        let a = sample_coupled(&t, &mut stream_rng(seed, &[4])).unwrap();
        let b = sample_coupled(&t, &mut stream_rng(seed, &[4])).unwrap();
        prop_assert_eq!(a.graph.edges(), b.graph.edges());
        prop_assert_eq!(a.allocation.profiles(), b.allocation.profiles());
        prop_assert_eq!(a.discrepancies, b.discrepancies);
    }

    #[test]
    fn projections_of_graphs_are_exact(
        n in 2u32..25,
        raw in prop::collection::vec((0u32..25, 0u32..25), 0..40),
        colors in prop::collection::vec(0usize..3, 25),
    ) {
        let edges: BTreeSet<(u32, u32)> = raw
            .into_iter()
            .map(|(u, v)| ((u % n).min(v % n), (u % n).max(v % n)))
            .filter(|(u, v)| u != v)
            .collect();
        let g = ColoredGraph::new(Alphabet::standard(3), colors[..n as usize].to_vec(), edges).unwrap();
        assert_graph_identities(&g);
        let mu = g.neighbourhood().to_measure();
        let nu = marginal_symbol(&mu);
        let pi = pair_projection(&mu);
        for a in 0..3 {
            prop_assert!((nu.get(a) * n as f64 - g.symbol_counts()[a] as f64).abs() <= 1e-12);
            for b in 0..3 {
                prop_assert!((pi.get(b, a) * n as f64 - g.pair_counts()[b * 3 + a] as f64).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn quantized_targets_are_integral(
        w in prop::collection::vec(0.01f64..1.0, 2),
        p in prop::collection::vec(0.0f64..3.0, 3),
        n in 1u64..200,
    ) {
        let s: f64 = w.iter().sum();
        let alphabet = Alphabet::standard(2);
        let nu = SymbolMeasure::new(alphabet.clone(), w.iter().map(|x| x / s).collect()).unwrap();
        let pi = PairMeasure::new(alphabet, vec![p[0], p[1], p[1], p[2]]).unwrap();
        let (nu_n, pi_n) = quantize_targets(&nu, &pi, n).unwrap();
        let t = QuantizedTargets::from_measures(&nu_n, &pi_n, n).unwrap();
        prop_assert_eq!(t.symbol_counts().iter().sum::<u64>(), n);
        prop_assert!(t.ball_count(0, 0).is_multiple_of(2) && t.ball_count(1, 1).is_multiple_of(2));
        prop_assert_eq!(t.ball_count(0, 1), t.ball_count(1, 0));
        for a in 0..2 {
            prop_assert!((nu_n.get(a) - nu.get(a)).abs() <= 1.0 / n as f64 + 1e-12);
        }
    }

    #[test]
    fn total_variation_is_a_metric(
        ws in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 3),
    ) {
        let alphabet = Alphabet::standard(2);
        let keys = [
            (0, LocalProfile::new(vec![0, 0])),
            (0, LocalProfile::new(vec![1, 0])),
            (1, LocalProfile::new(vec![0, 2])),
            (1, LocalProfile::new(vec![1, 1])),
        ];
        let measure = |w: &Vec<f64>| {
            let s: f64 = w.iter().sum::<f64>() + 1e-3;
            let entries = keys.iter().cloned().zip(w.iter().map(|x| (x + 2.5e-4) / s));
            NeighbourhoodMeasure::new(alphabet.clone(), entries).unwrap()
        };
        let [p, q, r] = [measure(&ws[0]), measure(&ws[1]), measure(&ws[2])];
        let d = |x: &NeighbourhoodMeasure, y: &NeighbourhoodMeasure| total_variation(x, y).unwrap();
        prop_assert!(d(&p, &p) <= 1e-15);
        prop_assert!((d(&p, &q) - d(&q, &p)).abs() <= 1e-15);
        prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-15);
    }

    #[test]
    fn relative_entropy_is_nonnegative(
        p in prop::collection::vec(0.0f64..1.0, 5),
        q in prop::collection::vec(0.01f64..1.0, 5),
    ) {
        let sp: f64 = p.iter().sum::<f64>() + 1e-9;
        let sq: f64 = q.iter().sum();
        let pn: Vec<f64> = p.iter().map(|x| (x + 2e-10) / sp).collect();
        let value = relative_entropy(pn.iter().copied().enumerate(), |&i| q[i] / sq);
        match value {
            ExtReal::Finite(v) => prop_assert!(v >= -1e-12),
            ExtReal::Infinite => prop_assert!(false, "finite reference"),
        }
        let zero = relative_entropy(pn.iter().copied().enumerate(), |&i| pn[i]);
        prop_assert!(zero.to_f64().abs() <= 1e-12);
    }
}

#[test]
fn poisson_reference_mass_converges() {
    let alphabet = Alphabet::standard(2);
    let nu = SymbolMeasure::new(alphabet.clone(), vec![0.3, 0.7]).unwrap();
    let pi = PairMeasure::new(alphabet, vec![1.2, 1.4, 1.4, 3.1]).unwrap();
    for a in 0..2 {
        let mut last = 0.0;
        for k in [5u32, 15, 30, 50] {
            let mut mass = 0.0;
            for l0 in 0..=k {
                for l1 in 0..=(k - l0) {
                    mass += poi_mass(&nu, &pi, a, &LocalProfile::new(vec![l0, l1])).unwrap();
                }
            }
            assert!(mass >= last - 1e-15);
            last = mass;
        }
        assert!(nu.get(a) - last < 1e-12, "deficit {}", nu.get(a) - last);
    }
}
