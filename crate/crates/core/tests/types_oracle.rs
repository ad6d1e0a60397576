use std::collections::BTreeMap;

use nbhd_ldp::measures::{Alphabet, EmpiricalNeighbourhood, LocalProfile, ProfileKey, QuantizedTargets};
use nbhd_ldp::types::{
    brute_force_type_distribution, entropy_identity_check, enumerate_type_class, exact_type_probability, BigRational,
};
use nbhd_ldp::Execution;
use num_bigint::BigInt;
use num_traits::{One, Zero};
use proptest::prelude::*;

/// Walks every placement of every ball and tallies the resulting types.
fn tally(t: &QuantizedTargets) -> BTreeMap<BTreeMap<ProfileKey, u64>, u64> {
    let m = t.alphabet().len();
    let mut symbols = Vec::new();
    for a in 0..m {
        symbols.extend(std::iter::repeat_n(a, t.symbol_count(a) as usize));
    }
    // one entry per ball: (ball symbol, candidate bins)
    let mut balls: Vec<(usize, Vec<usize>)> = Vec::new();
    for b in 0..m {
        for a in 0..m {
            let bins: Vec<usize> = (0..symbols.len()).filter(|&v| symbols[v] == a).collect();
            for _ in 0..t.ball_count(b, a) {
                balls.push((b, bins.clone()));
            }
        }
    }
    let mut digits = vec![0usize; balls.len()];
    let mut out = BTreeMap::new();
    loop {
        let mut profiles = vec![vec![0u32; m]; symbols.len()];
        for (i, (b, bins)) in balls.iter().enumerate() {
            profiles[bins[digits[i]]][*b] += 1;
        }
        let mut ty = BTreeMap::new();
        for (v, l) in profiles.into_iter().enumerate() {
            *ty.entry((symbols[v], LocalProfile::new(l))).or_insert(0) += 1;
        }
        *out.entry(ty).or_insert(0) += 1;
        let mut i = 0;
        loop {
            if i == balls.len() {
                return out;
            }
            digits[i] += 1;
            if digits[i] < balls[i].1.len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

fn instances() -> impl Strategy<Value = QuantizedTargets> {
    prop_oneof![
        (1u64..=6, 0u64..=3).prop_map(|(n, e)| QuantizedTargets::single_color(n, e).unwrap()),
        (2u64..=5)
            .prop_flat_map(|n| (Just(n), 1..n, 0u64..=1, 0u64..=2, 0u64..=1))
            .prop_map(|(n, k0, e00, e01, e11)| {
                QuantizedTargets::new(
                    Alphabet::standard(2),
                    n,
                    vec![k0, n - k0],
                    vec![2 * e00, e01, e01, 2 * e11],
                )
                .unwrap()
            }),
    ]
}

fn allocations(t: &QuantizedTargets) -> u128 {
    let m = t.alphabet().len();
    let mut total = 1u128;
    for b in 0..m {
        for a in 0..m {
            total *= (t.symbol_count(a) as u128).pow(t.ball_count(b, a) as u32);
        }
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_probability_matches_independent_tally(t in instances()) {
        prop_assume!(allocations(&t) <= 50_000);
        let tallied = tally(&t);
        let total: u64 = tallied.values().sum();
        let class = enumerate_type_class(&t, 40).unwrap();
        prop_assert_eq!(class.len(), tallied.len());
        for member in &class.members {
            let key = member.measure.counts().clone();
            let hits = *tallied.get(&key).expect("enumerated type is reachable");
            let expected = BigRational::new(BigInt::from(hits), BigInt::from(total));
            prop_assert_eq!(&member.probability, &expected);
            prop_assert_eq!(&exact_type_probability(&member.measure, &t).unwrap(), &expected);
        }
        prop_assert!(class.total_probability().is_one());
    }

    #[test]
    fn library_oracle_agrees_with_enumeration(t in instances()) {
        prop_assume!(allocations(&t) <= 50_000);
        let class = enumerate_type_class(&t, 40).unwrap();
        let seq = brute_force_type_distribution(&t, 100_000, Execution::Sequential).unwrap();
        let par = brute_force_type_distribution(&t, 100_000, Execution::Parallel).unwrap();
        prop_assert_eq!(&seq, &par);
        prop_assert_eq!(seq.len(), class.len());
        for member in &class.members {
            prop_assert_eq!(seq.get(&member.measure), Some(&member.probability));
        }
    }

    #[test]
    fn entropy_identity_holds(t in instances()) {
        let class = enumerate_type_class(&t, 40).unwrap();
        for member in &class.members {
            prop_assert!(entropy_identity_check(&member.measure, &t).unwrap() <= 1e-10);
        }
    }
}

#[test]
fn two_bins_one_edge() {
    let t = QuantizedTargets::single_color(2, 1).unwrap();
    let class = enumerate_type_class(&t, 40).unwrap();
    assert_eq!(class.len(), 2);
    let half = BigRational::new(1.into(), 2.into());
    for member in &class.members {
        assert_eq!(member.probability, half);
    }
}

#[test]
fn unreachable_type_has_zero_probability() {
    let t = QuantizedTargets::single_color(3, 1).unwrap();
    let mut counts = BTreeMap::new();
    counts.insert((0, LocalProfile::new(vec![2])), 1);
    counts.insert((0, LocalProfile::new(vec![0])), 2);
    let ok = EmpiricalNeighbourhood::new(Alphabet::standard(1), 3, counts).unwrap();
    assert_eq!(
        exact_type_probability(&ok, &t).unwrap(),
        BigRational::new(1.into(), 3.into())
    );

    let mut counts = BTreeMap::new();
    counts.insert((0, LocalProfile::new(vec![1])), 3);
    let off = EmpiricalNeighbourhood::new(Alphabet::standard(1), 3, counts).unwrap();
    assert!(exact_type_probability(&off, &t).unwrap().is_zero());
}
