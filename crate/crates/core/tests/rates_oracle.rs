mod common;

use nbhd_ldp::measures::{DegreeMeasure, NeighbourhoodMeasure, PairMeasure, SymbolMeasure};
use nbhd_ldp::rates::{
    lambda_root, minimizer_degree_profile, rate_degree, rate_isolated, rate_neighbourhood, root_map,
};
use nbhd_ldp::ExtReal;
use proptest::prelude::*;

/// Root of `(1 − e^{−λ})/λ = (1 − x)/c` by plain bisection.
fn bisect_lambda(x: f64, c: f64) -> f64 {
    let target = (1.0 - x) / c;
    let f = |l: f64| (1.0 - (-l).exp()) / l - target;
    let (mut lo, mut hi) = (1e-12, 1.0);
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn interior() -> impl Strategy<Value = (f64, f64)> {
    (0.3f64..2.5).prop_flat_map(|c| {
        let lo = (1.0 - c).max(0.0) + 0.05;
        (Just(c), lo..0.85)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn isolated_rate_matches_numeric_minimum((c, x) in interior()) {
        let (oracle, profile) = common::constrained_entropy_min(x, c, 60);
        let r = rate_isolated(x, c).unwrap();
        let value = r.value.finite().unwrap();
        prop_assert!((value - oracle).abs() < 1e-6, "x={x} c={c}: {value} vs {oracle}");
        let d = minimizer_degree_profile(x, c).unwrap();
        let tv: f64 = (0..profile.len()).map(|k| (d.get(k) - profile[k]).abs()).sum::<f64>() / 2.0;
        prop_assert!(tv < 1e-6, "tv {tv}");
    }

    #[test]
    fn lambda_matches_bisection((c, x) in interior()) {
        let l = lambda_root(x, c).unwrap().finite().unwrap();
        let oracle = bisect_lambda(x, c);
        prop_assert!((l - oracle).abs() <= 1e-9 * oracle.max(1.0), "{l} vs {oracle}");
        prop_assert!((root_map(l) - (1.0 - x) / c).abs() <= 1e-12);
    }

    #[test]
    fn single_color_neighbourhood_rate_is_degree_rate(
        w in prop::collection::vec(0.0f64..1.0, 6),
        c in 0.2f64..4.0,
    ) {
        let v: Vec<f64> = w.iter().map(|x| x + 1e-3).collect();
        let s: f64 = v.iter().sum();
        let d = DegreeMeasure::new(v.iter().map(|x| x / s).collect()).unwrap();
        let mean = d.mean();
        let mu = NeighbourhoodMeasure::from_degree_measure(&d).unwrap();
        let nu = SymbolMeasure::uniform(mu.alphabet().clone());
        let pi = PairMeasure::single(mean).unwrap();
        let j = rate_neighbourhood(&mu, &nu, &pi).unwrap().finite().unwrap();
        let delta = rate_degree(&d, mean).unwrap().finite().unwrap();
        prop_assert!((j - delta).abs() <= 1e-10);
        if (mean - c).abs() > 1e-6 {
            prop_assert_eq!(rate_degree(&d, c).unwrap(), ExtReal::Infinite);
        }
    }
}

#[test]
fn typical_value_anchors() {
    for c in [0.5f64, 1.0, 2.0] {
        let x = (-c).exp();
        let l = lambda_root(x, c).unwrap().finite().unwrap();
        assert!((l - c).abs() < 1e-10);
        assert!(rate_isolated(x, c).unwrap().value.finite().unwrap().abs() < 1e-10);
    }
    assert_eq!(rate_isolated(0.2, 0.5).unwrap().value, ExtReal::Infinite);
}

#[test]
fn half_isolated_at_unit_mean() {
    let l = lambda_root(0.5, 1.0).unwrap().finite().unwrap();
    assert!((l - bisect_lambda(0.5, 1.0)).abs() < 1e-12);
    let d = minimizer_degree_profile(0.5, 1.0).unwrap();
    assert!((d.get(1) - 0.5 * l / l.exp_m1()).abs() < 1e-12);
    let (oracle, _) = common::constrained_entropy_min(0.5, 1.0, 60);
    assert!((rate_isolated(0.5, 1.0).unwrap().value.to_f64() - oracle).abs() < 1e-6);
}
