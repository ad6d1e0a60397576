#![allow(dead_code, clippy::needless_range_loop)]

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

fn ln_fact(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Poisson(c) masses on `0..=k_max`.
pub fn poisson_masses(c: f64, k_max: usize) -> Vec<f64> {
    (0..=k_max)
        .map(|k| (-c + k as f64 * c.ln() - ln_fact(k)).exp())
        .collect()
}

/// Minimizes `Σ_k d_k ln(d_k / q_k)` over `d` on `{0, …, k_max}` with
/// `d_0 = x`, `Σ d = 1`, `Σ k d_k = c`, by infeasible-start Newton descent on
/// `d_1, …, d_{k_max}`. Returns `(value, d)`.
pub fn constrained_entropy_min(x: f64, c: f64, k_max: usize) -> (f64, Vec<f64>) {
    let q = poisson_masses(c, k_max);
    let kk = k_max;
    // variables d_1..d_K, constraints Σ d = 1 − x and Σ k d = c
    let b = [1.0 - x, c];
    let mut d = vec![(1.0 - x) / kk as f64; kk];
    for _ in 0..500 {
        let g: Vec<f64> = (0..kk).map(|i| (d[i] / q[i + 1]).ln() + 1.0).collect();
        let hinv = &d;
        let a = |row: usize, i: usize| if row == 0 { 1.0 } else { (i + 1) as f64 };
        let rp: Vec<f64> = (0..2)
            .map(|r| b[r] - (0..kk).map(|i| a(r, i) * d[i]).sum::<f64>())
            .collect();
        // Schur complement S = A H⁻¹ Aᵀ, rhs = −rp − A H⁻¹ g
        let mut s = [[0.0; 2]; 2];
        let mut rhs = [0.0; 2];
        for r in 0..2 {
            for t in 0..2 {
                s[r][t] = (0..kk).map(|i| a(r, i) * hinv[i] * a(t, i)).sum();
            }
            rhs[r] = -rp[r] - (0..kk).map(|i| a(r, i) * hinv[i] * g[i]).sum::<f64>();
        }
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let w = [
            (rhs[0] * s[1][1] - s[0][1] * rhs[1]) / det,
            (s[0][0] * rhs[1] - s[1][0] * rhs[0]) / det,
        ];
        let step: Vec<f64> = (0..kk)
            .map(|i| -hinv[i] * (g[i] + a(0, i) * w[0] + a(1, i) * w[1]))
            .collect();
        let mut t: f64 = 1.0;
        for i in 0..kk {
            if step[i] < 0.0 {
                t = t.min(-0.95 * d[i] / step[i]);
            }
        }
        let mut size: f64 = 0.0;
        for i in 0..kk {
            d[i] += t * step[i];
            size = size.max((t * step[i]).abs() / d[i].max(1e-300));
        }
        if t == 1.0 && size < 1e-15 {
            break;
        }
    }
    let mut full = vec![x];
    full.extend_from_slice(&d);
    let value = full
        .iter()
        .zip(&q)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, qk)| p * (p / qk).ln())
        .sum();
    (value, full)
}

fn binom(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

fn ln_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits < 1000 {
        return x.to_f64().unwrap().ln();
    }
    let shift = bits - 60;
    (x >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
}

/// `ln P(#isolated ≥ k)` for the uniform graph on `n` labelled vertices with
/// exactly `m` edges, by inclusion–exclusion over isolated sets.
pub fn ln_isolated_tail(n: u64, m: u64, k: u64) -> f64 {
    let pairs = |v: u64| v * v.saturating_sub(1) / 2;
    // N_j = number of graphs where a fixed j-set is isolated, times C(n, j)
    let s: Vec<BigUint> = (0..=n).map(|j| binom(n, j) * binom(pairs(n - j), m)).collect();
    let mut tail = BigUint::zero();
    for i in k..=n {
        // exactly i isolated: Σ_{j ≥ i} (−1)^{j−i} C(j, i) S_j
        let (mut plus, mut minus) = (BigUint::zero(), BigUint::zero());
        for j in i..=n {
            let term = binom(j, i) * &s[j as usize];
            if (j - i) % 2 == 0 {
                plus += term;
            } else {
                minus += term;
            }
        }
        tail += plus - minus;
    }
    if tail.is_zero() {
        return f64::NEG_INFINITY;
    }
    ln_big(&tail) - ln_big(&binom(pairs(n), m))
}
