//! Exact method-of-types computations for the random allocation model.
//!
//! For quantized targets `(ν_n, π_n)` the occupancy measure of the allocation
//! takes finitely many values, its *types*. [`enumerate_type_class`] lists them
//! by composing ball counts into bins, [`exact_type_probability`] evaluates the
//! multinomial counting formula in big rationals, and
//! [`brute_force_type_distribution`] checks both by walking every allocation.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigUint;
pub use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ext::ExtReal;
use crate::measures::{
    entropy_against_poisson, ln_factorial, EmpiricalNeighbourhood, LocalProfile, ProfileKey, QuantizedTargets,
};

/// Default cap on the total number of balls accepted by [`enumerate_type_class`].
pub const DEFAULT_MAX_BALLS: u64 = 40;
/// Default cap on the number of allocations walked by the brute-force oracle.
pub const DEFAULT_MAX_ALLOCATIONS: u64 = 10_000_000;

fn factorial(k: u64) -> BigUint {
    (1..=k).fold(BigUint::one(), |acc, i| acc * i)
}

/// Natural log of a big unsigned integer, accurate to double precision.
pub fn ln_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().expect("fits in f64").ln();
    }
    let shift = bits - 64;
    (x >> shift).to_f64().expect("64 bits").ln() + shift as f64 * std::f64::consts::LN_2
}

/// Natural log of a positive rational.
pub fn ln_rational(x: &BigRational) -> f64 {
    let (num, den) = (x.numer().magnitude(), x.denom().magnitude());
    if num.is_zero() {
        return f64::NEG_INFINITY;
    }
    ln_biguint(num) - ln_biguint(den)
}

/// One achievable occupancy type and its exact probability.
#[derive(Debug, Clone)]
pub struct TypeMember {
    pub measure: EmpiricalNeighbourhood,
    pub probability: BigRational,
}

impl TypeMember {
    pub fn ln_probability(&self) -> f64 {
        ln_rational(&self.probability)
    }
}

/// The type class `K⁽ⁿ⁾(ν_n, π_n)`, in canonical order.
#[derive(Debug, Clone)]
pub struct TypeClass {
    pub targets: QuantizedTargets,
    pub members: Vec<TypeMember>,
}

impl TypeClass {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn total_probability(&self) -> BigRational {
        self.members
            .iter()
            .fold(BigRational::zero(), |acc, t| acc + &t.probability)
    }

    /// `max_μ |(−1/n) ln P(μ) − H(μ ‖ Poi_n)|`.
    pub fn max_entropy_gap(&self) -> Result<f64> {
        let reference = self.targets.poisson_reference()?;
        let n = self.targets.n() as f64;
        let mut gap: f64 = 0.0;
        for member in &self.members {
            let h = entropy_against_poisson(&member.measure.to_measure(), &reference)?
                .finite()
                .ok_or_else(|| Error::Domain("type outside the support of Poi_n".into()))?;
            gap = gap.max((-member.ln_probability() / n - h).abs());
        }
        Ok(gap)
    }
}

/// All vectors `v` with `0 ≤ v ≤ bound`, in descending lexicographic order.
fn profiles_below(bound: &[u64]) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::new()];
    for &r in bound {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..=r).rev().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Multisets of `bins` profiles summing to `balls`, as profile → multiplicity.
fn symbol_class_types(bins: u64, balls: &[u64]) -> Vec<BTreeMap<LocalProfile, u64>> {
    let candidates = profiles_below(balls);
    let mut out = Vec::new();
    let mut chosen: Vec<usize> = Vec::with_capacity(bins as usize);
    let mut remaining = balls.to_vec();

    fn rec(
        candidates: &[Vec<u64>],
        start: usize,
        bins_left: u64,
        remaining: &mut Vec<u64>,
        chosen: &mut Vec<usize>,
        out: &mut Vec<BTreeMap<LocalProfile, u64>>,
    ) {
        if bins_left == 0 {
            if remaining.iter().all(|&r| r == 0) {
                let mut multiset = BTreeMap::new();
                for &i in chosen.iter() {
                    let p = LocalProfile::new(candidates[i].iter().map(|&v| v as u32).collect());
                    *multiset.entry(p).or_insert(0) += 1;
                }
                out.push(multiset);
            }
            return;
        }
        for (i, p) in candidates.iter().enumerate().skip(start) {
            if p.iter().zip(remaining.iter()).any(|(v, r)| v > r) {
                continue;
            }
            // Later picks are lexicographically ≤ p, so their first coordinate is ≤ p[0].
            if let (Some(&first), Some(&r0)) = (p.first(), remaining.first()) {
                if r0 > bins_left * first {
                    break;
                }
            }
            for (r, v) in remaining.iter_mut().zip(p) {
                *r -= v;
            }
            chosen.push(i);
            rec(candidates, i, bins_left - 1, remaining, chosen, out);
            chosen.pop();
            for (r, v) in remaining.iter_mut().zip(p) {
                *r += v;
            }
        }
    }

    rec(&candidates, 0, bins, &mut remaining, &mut chosen, &mut out);
    out
}

/// Enumerates `K⁽ⁿ⁾(ν_n, π_n)` with exact probabilities.
///
/// Types factor over the bin symbol: for each symbol `a` the `n ν_n(a)` bins
/// take a multiset of profiles whose `b`-coordinates sum to `n π_n(b, a)`; every
/// such multiset is achievable. The class is the product over symbols.
pub fn enumerate_type_class(targets: &QuantizedTargets, max_balls: u64) -> Result<TypeClass> {
    targets.check_bins()?;
    let total = targets.total_balls();
    if total > max_balls {
        return Err(Error::BudgetExceeded {
            what: "total ball",
            count: total as u128,
            limit: max_balls as u128,
        });
    }
    let m = targets.alphabet().len();
    let per_symbol: Vec<Vec<BTreeMap<LocalProfile, u64>>> = (0..m)
        .map(|a| {
            let balls: Vec<u64> = (0..m).map(|b| targets.ball_count(b, a)).collect();
            symbol_class_types(targets.symbol_count(a), &balls)
        })
        .collect();

    let mut combined: Vec<BTreeMap<ProfileKey, u64>> = vec![BTreeMap::new()];
    for (a, options) in per_symbol.iter().enumerate() {
        let mut next = Vec::with_capacity(combined.len() * options.len());
        for base in &combined {
            for option in options {
                let mut merged = base.clone();
                merged.extend(option.iter().map(|(l, &c)| ((a, l.clone()), c)));
                next.push(merged);
            }
        }
        combined = next;
    }

    let mut members = combined
        .into_iter()
        .map(|counts| {
            let measure = EmpiricalNeighbourhood::new(targets.alphabet().clone(), targets.n(), counts)?;
            let probability = exact_type_probability(&measure, targets)?;
            Ok(TypeMember { measure, probability })
        })
        .collect::<Result<Vec<_>>>()?;
    members.sort_by(|x, y| x.measure.cmp(&y.measure));
    members.dedup_by(|x, y| x.measure == y.measure);
    Ok(TypeClass {
        targets: targets.clone(),
        members,
    })
}

/// Probability that the allocation model produces the occupancy measure `mu`:
///
/// `Π_a (n ν_n(a))! / Π_ℓ (n μ(a,ℓ))!`
/// `· Π_{a,b} (n π_n(b,a))! / Π_{bins j of a} ℓ_j(b)!`
/// `· Π_{a,b} (n ν_n(a))^{−n π_n(b,a)}`,
///
/// and zero when `Δ(μ) ≠ (ν_n, π_n)`.
pub fn exact_type_probability(mu: &EmpiricalNeighbourhood, targets: &QuantizedTargets) -> Result<BigRational> {
    mu.alphabet().ensure_same(targets.alphabet())?;
    if mu.n() != targets.n() {
        return Err(Error::NotQuantized {
            n: targets.n(),
            what: format!("type has n = {}", mu.n()),
        });
    }
    if !mu.matches_targets(targets) {
        return Ok(BigRational::zero());
    }
    let m = targets.alphabet().len();
    let mut numer = BigUint::one();
    let mut denom = BigUint::one();
    for a in 0..m {
        numer *= factorial(targets.symbol_count(a));
        for b in 0..m {
            let balls = targets.ball_count(b, a);
            numer *= factorial(balls);
            denom *= BigUint::from(targets.symbol_count(a)).pow(balls as u32);
        }
    }
    for ((_, profile), &count) in mu.counts() {
        denom *= factorial(count);
        for &k in profile.counts() {
            denom *= factorial(k as u64).pow(count as u32);
        }
    }
    Ok(BigRational::new(numer.into(), denom.into()))
}

/// Distribution of the occupancy measure obtained by walking every allocation
/// of labelled balls to bins (bins grouped by symbol, each allocation equally
/// likely).
pub fn brute_force_type_distribution(
    targets: &QuantizedTargets,
    max_allocations: u64,
    exec: Execution,
) -> Result<BTreeMap<EmpiricalNeighbourhood, BigRational>> {
    targets.check_bins()?;
    let m = targets.alphabet().len();
    let n = targets.n() as usize;

    let mut bin_symbol = Vec::with_capacity(n);
    let mut first_bin = Vec::with_capacity(m);
    for a in 0..m {
        first_bin.push(bin_symbol.len());
        bin_symbol.extend(std::iter::repeat_n(a, targets.symbol_count(a) as usize));
    }
    // (ball symbol, bin symbol) for every ball; its digit ranges over the bins of that symbol.
    let mut balls = Vec::new();
    for a in 0..m {
        for b in 0..m {
            balls.extend(std::iter::repeat_n((b, a), targets.ball_count(b, a) as usize));
        }
    }
    let radices: Vec<u64> = balls.iter().map(|&(_, a)| targets.symbol_count(a)).collect();
    let mut total: u128 = 1;
    for &r in &radices {
        total = total.saturating_mul(r as u128);
        if total > max_allocations as u128 {
            return Err(Error::BudgetExceeded {
                what: "allocation",
                count: radices.iter().fold(1u128, |acc, &r| acc.saturating_mul(r as u128)),
                limit: max_allocations as u128,
            });
        }
    }
    let total = total as u64;

    let chunk = 1u64 << 14;
    let chunks = total.div_ceil(chunk) as usize;
    let partials = exec.map(chunks, |c| {
        let start = c as u64 * chunk;
        let end = (start + chunk).min(total);
        let mut digits = vec![0u64; radices.len()];
        let mut rest = start;
        for (d, &r) in digits.iter_mut().zip(&radices) {
            *d = rest % r;
            rest /= r;
        }
        let mut counts: HashMap<Vec<(usize, Vec<u32>)>, u64> = HashMap::new();
        let mut profiles = vec![vec![0u32; m]; n];
        for _ in start..end {
            for p in profiles.iter_mut() {
                p.iter_mut().for_each(|x| *x = 0);
            }
            for (&(b, a), &d) in balls.iter().zip(&digits) {
                profiles[first_bin[a] + d as usize][b] += 1;
            }
            let mut key: Vec<(usize, Vec<u32>)> =
                bin_symbol.iter().zip(&profiles).map(|(&a, p)| (a, p.clone())).collect();
            key.sort_unstable();
            *counts.entry(key).or_insert(0) += 1;
            for (d, &r) in digits.iter_mut().zip(&radices) {
                *d += 1;
                if *d < r {
                    break;
                }
                *d = 0;
            }
        }
        counts
    });

    let mut merged: BTreeMap<Vec<(usize, Vec<u32>)>, u64> = BTreeMap::new();
    for part in partials {
        for (k, c) in part {
            *merged.entry(k).or_insert(0) += c;
        }
    }
    merged
        .into_iter()
        .map(|(key, c)| {
            let mut counts = BTreeMap::new();
            for (a, p) in key {
                *counts.entry((a, LocalProfile::new(p))).or_insert(0) += 1;
            }
            let measure = EmpiricalNeighbourhood::new(targets.alphabet().clone(), targets.n(), counts)?;
            Ok((
                measure,
                BigRational::new(BigUint::from(c).into(), BigUint::from(total).into()),
            ))
        })
        .collect()
}

/// The rearranged form of `H(μ_n ‖ Poi_n)` built from entropies and the pair
/// projection of `μ_n`:
///
/// `H(ν_n) − H(μ_n) − Σ_b [Σ_a D(b,a) log D(b,a) − Σ_a D(b,a) − Σ_a D(b,a) log ν_n(a)
///  − Σ_{(a,ℓ)} log(ℓ(b)!) μ_n(a,ℓ)]`
///
/// with `D = Δ₂(μ_n)` and `H` the Shannon entropy.
pub fn rearranged_entropy(mu: &EmpiricalNeighbourhood, targets: &QuantizedTargets) -> f64 {
    let m = targets.alphabet().len();
    let n = targets.n() as f64;
    let nu = targets.nu();
    let measure = mu.to_measure();
    let d: Vec<f64> = mu.pair_counts().iter().map(|&c| c as f64 / n).collect();
    let mut bracket = 0.0;
    for b in 0..m {
        for a in 0..m {
            let x = d[b * m + a];
            if x > 0.0 {
                bracket += x * x.ln() - x - x * nu.get(a).ln();
            }
        }
    }
    for ((_, l), w) in measure.iter() {
        for &k in l.counts() {
            bracket -= ln_factorial(k as u64) * w;
        }
    }
    nu.entropy() - measure.entropy() - bracket
}

/// `|rearranged expression − H(μ_n ‖ Poi_n)|`.
pub fn entropy_identity_check(mu: &EmpiricalNeighbourhood, targets: &QuantizedTargets) -> Result<f64> {
    let reference = targets.poisson_reference()?;
    let direct = match entropy_against_poisson(&mu.to_measure(), &reference)? {
        ExtReal::Finite(h) => h,
        ExtReal::Infinite => return Err(Error::Domain("type outside the support of Poi_n".into())),
    };
    Ok((rearranged_entropy(mu, targets) - direct).abs())
}

/// Stirling correction terms and the resulting sandwich around the exact
/// type probability.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CorrectionTerms {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub support_size: usize,
    pub class_size: usize,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Sandwich {
    pub ln_lower: f64,
    pub ln_probability: f64,
    pub ln_upper: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

/// Stirling correction terms of the type-class probability in their literal form,
/// including their `1/n²` factors and `|K⁽ⁿ⁾|` bookkeeping. Diagnostic only.
pub fn stirling_corrections(
    mu: &EmpiricalNeighbourhood,
    targets: &QuantizedTargets,
    class_size: usize,
) -> Result<CorrectionTerms> {
    let alphabet = targets.alphabet();
    let m = alphabet.len();
    let n = targets.n() as f64;
    let nu = targets.nu();
    let pi = targets.pi();
    let log_2pin = (2.0 * std::f64::consts::PI * n).ln();
    let ln_k = (class_size as f64).ln();

    let mut sum_log_pi = 0.0;
    let mut sum_inv_pi_plus = 0.0;
    let mut sum_inv_pi = 0.0;
    for b in 0..m {
        for a in 0..m {
            let p = pi.get(b, a);
            if p <= 0.0 {
                return Err(Error::ZeroMassLog(format!(
                    "π_n({}, {})",
                    alphabet.name(b),
                    alphabet.name(a)
                )));
            }
            sum_log_pi += p.ln();
            sum_inv_pi_plus += 1.0 / (12.0 * p + 1.0 / n);
            sum_inv_pi += 1.0 / (12.0 * p);
        }
    }
    let mut sum_log_nu = 0.0;
    let mut sum_inv_nu_plus = 0.0;
    let mut sum_inv_nu = 0.0;
    for a in 0..m {
        let v = nu.get(a);
        if v <= 0.0 {
            return Err(Error::ZeroMassLog(format!("ν_n({})", alphabet.name(a))));
        }
        sum_log_nu += v.ln();
        sum_inv_nu_plus += 1.0 / (12.0 * v + 1.0 / n);
        sum_inv_nu += 1.0 / (12.0 * v);
    }
    let measure = mu.to_measure();
    let mut sum_log_mu = 0.0;
    let mut sum_inv_mu_plus = 0.0;
    let mut sum_inv_mu = 0.0;
    for (_, w) in measure.iter() {
        sum_log_mu += w.ln();
        sum_inv_mu_plus += 1.0 / (12.0 * w + 1.0 / n);
        sum_inv_mu += 1.0 / (12.0 * w);
    }
    let mf = m as f64;
    let support = mu.support_len();

    let alpha1 = -ln_k / n
        + sum_log_pi / n
        + (mf + mf * mf) * log_2pin / (2.0 * n)
        + sum_inv_nu_plus / (n * n)
        + sum_log_nu / n
        + sum_inv_pi_plus / (n * n);
    let beta1 = sum_log_mu / n + sum_inv_mu_plus / (n * n);
    let theta1 = n * alpha1 - n * beta1 - support as f64 * log_2pin / (2.0 * n);

    let alpha2 = ln_k / n
        + sum_inv_pi / (n * n)
        + sum_inv_nu / (n * n)
        + sum_log_pi / n
        + (mf + mf * mf) * log_2pin / (2.0 * n)
        + sum_log_nu / n;
    let beta2 = sum_log_mu / n + sum_inv_mu / n;
    let theta2 = n * alpha2 - n * beta2;

    Ok(CorrectionTerms {
        alpha1,
        alpha2,
        beta1,
        beta2,
        theta1,
        theta2,
        support_size: support,
        class_size,
    })
}

/// Compares `exp(−nH + θ₁) ≤ P ≤ |K|⁻¹ exp(−nH + θ₂)` in log space.
pub fn sandwich(member: &TypeMember, targets: &QuantizedTargets, terms: &CorrectionTerms) -> Result<Sandwich> {
    let n = targets.n() as f64;
    let h = entropy_against_poisson(&member.measure.to_measure(), &targets.poisson_reference()?)?
        .finite()
        .ok_or_else(|| Error::Domain("type outside the support of Poi_n".into()))?;
    let ln_p = member.ln_probability();
    let ln_lower = -n * h + terms.theta1;
    let ln_upper = -(terms.class_size as f64).ln() - n * h + terms.theta2;
    Ok(Sandwich {
        ln_lower,
        ln_probability: ln_p,
        ln_upper,
        lower_holds: ln_lower <= ln_p,
        upper_holds: ln_p <= ln_upper,
    })
}
