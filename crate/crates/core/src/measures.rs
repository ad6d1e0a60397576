//! Measures on symbols, symbol pairs, (symbol, neighbourhood profile) pairs
//! and degrees, plus the functionals relating them.
//!
//! Float-valued measures (`SymbolMeasure`, `PairMeasure`, `NeighbourhoodMeasure`,
//! `DegreeMeasure`) are used for rate-function evaluation. Anything produced by
//! counting (samples, types) is kept exact in [`EmpiricalNeighbourhood`] and
//! [`QuantizedTargets`], whose identities are checked in integer arithmetic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext::ExtReal;

/// Tolerance on total mass of float probability measures.
pub const MASS_TOL: f64 = 1e-12;
/// Tolerance used by [`check_consistency`].
pub const CONSISTENCY_TOL: f64 = 1e-10;

pub fn ln_factorial(k: u64) -> f64 {
    statrs::function::factorial::ln_factorial(k)
}

/// Ordered set of symbol names. Index `i` is the canonical index of a symbol.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Alphabet(Arc<Vec<String>>);

impl Alphabet {
    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Result<Self> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(Error::InvalidMeasure("empty alphabet".into()));
        }
        let distinct: BTreeSet<&String> = symbols.iter().collect();
        if distinct.len() != symbols.len() {
            return Err(Error::InvalidMeasure(format!("duplicate symbols in {symbols:?}")));
        }
        Ok(Alphabet(Arc::new(symbols)))
    }

    /// `m` symbols named `a`, `b`, ... (or `s0`, `s1`, ... beyond 26).
    pub fn standard(m: usize) -> Self {
        assert!(m >= 1, "alphabet needs at least one symbol");
        let names = (0..m)
            .map(|i| {
                if m <= 26 {
                    ((b'a' + i as u8) as char).to_string()
                } else {
                    format!("s{i}")
                }
            })
            .collect();
        Alphabet(Arc::new(names))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.0
    }

    pub fn name(&self, index: usize) -> &str {
        &self.0[index]
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.0.iter().position(|s| s == symbol)
    }

    fn lookup(&self, symbol: &str) -> Result<usize> {
        self.index_of(symbol)
            .ok_or_else(|| Error::InvalidMeasure(format!("unknown symbol {symbol:?}")))
    }

    pub fn ensure_same(&self, other: &Alphabet) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::AlphabetMismatch {
                left: self.0.to_vec(),
                right: other.0.to_vec(),
            })
        }
    }
}

impl fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

fn check_weight(w: f64, what: &str) -> Result<()> {
    if w.is_finite() && w >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidMeasure(format!(
            "{what}: weight {w} is not a finite non-negative number"
        )))
    }
}

fn check_total(total: f64, what: &str) -> Result<()> {
    if (total - 1.0).abs() <= MASS_TOL {
        Ok(())
    } else {
        Err(Error::InvalidMeasure(format!("{what}: total mass {total} is not 1")))
    }
}

// ---------------------------------------------------------------------------
// Symbol measure

/// Probability law on the alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SymbolMeasureRepr", into = "SymbolMeasureRepr")]
pub struct SymbolMeasure {
    alphabet: Alphabet,
    weights: Vec<f64>,
}

impl SymbolMeasure {
    pub fn new(alphabet: Alphabet, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != alphabet.len() {
            return Err(Error::InvalidMeasure(format!(
                "symbol measure has {} weights for {} symbols",
                weights.len(),
                alphabet.len()
            )));
        }
        for &w in &weights {
            check_weight(w, "symbol measure")?;
        }
        check_total(weights.iter().sum(), "symbol measure")?;
        Ok(SymbolMeasure { alphabet, weights })
    }

    pub fn point_mass(alphabet: Alphabet, index: usize) -> Self {
        let mut weights = vec![0.0; alphabet.len()];
        weights[index] = 1.0;
        SymbolMeasure { alphabet, weights }
    }

    pub fn uniform(alphabet: Alphabet) -> Self {
        let m = alphabet.len();
        SymbolMeasure {
            alphabet,
            weights: vec![1.0 / m as f64; m],
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, a: usize) -> f64 {
        self.weights[a]
    }

    /// Shannon entropy `−Σ ν log ν`.
    pub fn entropy(&self) -> f64 {
        -self
            .weights
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|&w| w * w.ln())
            .sum::<f64>()
    }

    pub fn total_variation(&self, other: &SymbolMeasure) -> Result<f64> {
        self.alphabet.ensure_same(&other.alphabet)?;
        Ok(0.5
            * self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>())
    }
}

#[derive(Serialize, Deserialize)]
struct SymbolMeasureRepr {
    alphabet: Vec<String>,
    weights: Vec<(String, f64)>,
}

impl From<SymbolMeasure> for SymbolMeasureRepr {
    fn from(m: SymbolMeasure) -> Self {
        SymbolMeasureRepr {
            alphabet: m.alphabet.symbols().to_vec(),
            weights: m.alphabet.symbols().iter().cloned().zip(m.weights).collect(),
        }
    }
}

impl TryFrom<SymbolMeasureRepr> for SymbolMeasure {
    type Error = Error;

    fn try_from(r: SymbolMeasureRepr) -> Result<Self> {
        let alphabet = Alphabet::new(r.alphabet)?;
        let mut weights = vec![0.0; alphabet.len()];
        let mut seen = vec![false; alphabet.len()];
        for (s, w) in r.weights {
            let i = alphabet.lookup(&s)?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidMeasure(format!("symbol {s:?} listed twice")));
            }
            weights[i] = w;
        }
        SymbolMeasure::new(alphabet, weights)
    }
}

// ---------------------------------------------------------------------------
// Pair measure

/// Finite measure on ordered symbol pairs, stored as `π(b, a)` with `b` the row.
///
/// Measures built through [`PairMeasure::new`] or deserialization are
/// symmetric; [`pair_projection`] of an arbitrary neighbourhood measure may not
/// be, see [`PairMeasure::is_symmetric`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PairMeasureRepr", into = "PairMeasureRepr")]
pub struct PairMeasure {
    alphabet: Alphabet,
    entries: Vec<f64>,
}

impl PairMeasure {
    /// `entries[b * m + a] = π(b, a)`; must be symmetric.
    pub fn new(alphabet: Alphabet, entries: Vec<f64>) -> Result<Self> {
        let m = alphabet.len();
        if entries.len() != m * m {
            return Err(Error::InvalidMeasure(format!(
                "pair measure has {} entries for {m} symbols",
                entries.len()
            )));
        }
        for &w in &entries {
            check_weight(w, "pair measure")?;
        }
        for b in 0..m {
            for a in 0..b {
                if entries[b * m + a] != entries[a * m + b] {
                    return Err(Error::InvalidMeasure(format!(
                        "pair measure not symmetric at ({}, {})",
                        alphabet.name(b),
                        alphabet.name(a)
                    )));
                }
            }
        }
        Ok(PairMeasure { alphabet, entries })
    }

    pub fn zero(alphabet: Alphabet) -> Self {
        let m = alphabet.len();
        PairMeasure {
            alphabet,
            entries: vec![0.0; m * m],
        }
    }

    /// Single-symbol measure with `π(a, a) = c`.
    pub fn single(c: f64) -> Result<Self> {
        PairMeasure::new(Alphabet::standard(1), vec![c])
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// `π(b, a)`.
    pub fn get(&self, b: usize, a: usize) -> f64 {
        self.entries[b * self.alphabet.len() + a]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().sum()
    }

    pub fn is_symmetric(&self) -> bool {
        let m = self.alphabet.len();
        (0..m).all(|b| (0..b).all(|a| self.get(b, a) == self.get(a, b)))
    }
}

#[derive(Serialize, Deserialize)]
struct PairMeasureRepr {
    alphabet: Vec<String>,
    entries: Vec<(String, String, f64)>,
}

impl From<PairMeasure> for PairMeasureRepr {
    fn from(p: PairMeasure) -> Self {
        let m = p.alphabet.len();
        let mut entries = Vec::with_capacity(m * m);
        for b in 0..m {
            for a in 0..m {
                entries.push((
                    p.alphabet.name(b).to_owned(),
                    p.alphabet.name(a).to_owned(),
                    p.get(b, a),
                ));
            }
        }
        PairMeasureRepr {
            alphabet: p.alphabet.symbols().to_vec(),
            entries,
        }
    }
}

impl TryFrom<PairMeasureRepr> for PairMeasure {
    type Error = Error;

    fn try_from(r: PairMeasureRepr) -> Result<Self> {
        let alphabet = Alphabet::new(r.alphabet)?;
        let m = alphabet.len();
        let mut entries = vec![0.0; m * m];
        let mut seen = vec![false; m * m];
        for (b, a, w) in r.entries {
            let idx = alphabet.lookup(&b)? * m + alphabet.lookup(&a)?;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::InvalidMeasure(format!("pair ({b}, {a}) listed twice")));
            }
            entries[idx] = w;
        }
        PairMeasure::new(alphabet, entries)
    }
}

// ---------------------------------------------------------------------------
// Profiles and neighbourhood measures

/// Neighbour counts per symbol, dense over the alphabet.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LocalProfile(Vec<u32>);

impl LocalProfile {
    pub fn new(counts: Vec<u32>) -> Self {
        LocalProfile(counts)
    }

    pub fn zero(m: usize) -> Self {
        LocalProfile(vec![0; m])
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, b: usize) -> u32 {
        self.0[b]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u64 {
        self.0.iter().map(|&c| c as u64).sum()
    }

    pub(crate) fn increment(&mut self, b: usize) {
        self.0[b] += 1;
    }
}

/// Key of a neighbourhood measure: own symbol index and neighbour profile.
pub type ProfileKey = (usize, LocalProfile);

fn check_profile(alphabet: &Alphabet, key: &ProfileKey) -> Result<()> {
    if key.0 >= alphabet.len() || key.1.len() != alphabet.len() {
        return Err(Error::InvalidMeasure(format!(
            "profile key ({}, {:?}) does not fit alphabet of size {}",
            key.0,
            key.1.counts(),
            alphabet.len()
        )));
    }
    Ok(())
}

/// Probability measure on `symbol × ℕ^symbols` with finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NeighbourhoodRepr", into = "NeighbourhoodRepr")]
pub struct NeighbourhoodMeasure {
    alphabet: Alphabet,
    weights: BTreeMap<ProfileKey, f64>,
}

impl NeighbourhoodMeasure {
    /// Zero weights are dropped; repeated keys are rejected.
    pub fn new(alphabet: Alphabet, entries: impl IntoIterator<Item = (ProfileKey, f64)>) -> Result<Self> {
        let mut weights = BTreeMap::new();
        let mut total = 0.0;
        for (key, w) in entries {
            check_profile(&alphabet, &key)?;
            check_weight(w, "neighbourhood measure")?;
            total += w;
            if weights.contains_key(&key) {
                return Err(Error::InvalidMeasure(format!(
                    "profile ({}, {:?}) listed twice",
                    alphabet.name(key.0),
                    key.1.counts()
                )));
            }
            if w > 0.0 {
                weights.insert(key, w);
            }
        }
        check_total(total, "neighbourhood measure")?;
        Ok(NeighbourhoodMeasure { alphabet, weights })
    }

    pub fn point_mass(alphabet: Alphabet, a: usize, profile: LocalProfile) -> Result<Self> {
        NeighbourhoodMeasure::new(alphabet, [((a, profile), 1.0)])
    }

    /// Single-symbol measure putting mass `d(k)` on profile `(k)`; the
    /// identification of a degree measure with a neighbourhood measure when
    /// there is only one colour.
    pub fn from_degree_measure(d: &DegreeMeasure) -> Result<Self> {
        NeighbourhoodMeasure::new(
            Alphabet::standard(1),
            d.weights()
                .iter()
                .enumerate()
                .map(|(k, &w)| ((0, LocalProfile::new(vec![k as u32])), w)),
        )
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn get(&self, a: usize, profile: &LocalProfile) -> f64 {
        // BTreeMap lookup on a borrowed tuple key needs an owned key.
        self.weights.get(&(a, profile.clone())).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ProfileKey, f64)> {
        self.weights.iter().map(|(k, &w)| (k, w))
    }

    pub fn support_len(&self) -> usize {
        self.weights.len()
    }

    /// Shannon entropy `−Σ μ log μ`.
    pub fn entropy(&self) -> f64 {
        -self.weights.values().map(|&w| w * w.ln()).sum::<f64>()
    }
}

#[derive(Serialize, Deserialize)]
struct NeighbourhoodRepr {
    alphabet: Vec<String>,
    entries: Vec<(String, LocalProfile, f64)>,
}

impl From<NeighbourhoodMeasure> for NeighbourhoodRepr {
    fn from(m: NeighbourhoodMeasure) -> Self {
        let entries = m
            .weights
            .iter()
            .map(|((a, l), &w)| (m.alphabet.name(*a).to_owned(), l.clone(), w))
            .collect();
        NeighbourhoodRepr {
            alphabet: m.alphabet.symbols().to_vec(),
            entries,
        }
    }
}

impl TryFrom<NeighbourhoodRepr> for NeighbourhoodMeasure {
    type Error = Error;

    fn try_from(r: NeighbourhoodRepr) -> Result<Self> {
        let alphabet = Alphabet::new(r.alphabet)?;
        let entries = r
            .entries
            .into_iter()
            .map(|(s, l, w)| Ok(((alphabet.lookup(&s)?, l), w)))
            .collect::<Result<Vec<_>>>()?;
        NeighbourhoodMeasure::new(alphabet, entries)
    }
}

// ---------------------------------------------------------------------------
// Degree measure

/// Probability measure on `ℕ`, dense on `0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DegreeRepr", into = "DegreeRepr")]
pub struct DegreeMeasure {
    weights: Vec<f64>,
}

impl DegreeMeasure {
    pub fn new(mut weights: Vec<f64>) -> Result<Self> {
        for &w in &weights {
            check_weight(w, "degree measure")?;
        }
        check_total(weights.iter().sum(), "degree measure")?;
        while weights.len() > 1 && weights.last() == Some(&0.0) {
            weights.pop();
        }
        Ok(DegreeMeasure { weights })
    }

    pub fn point_mass(k: usize) -> Self {
        let mut weights = vec![0.0; k + 1];
        weights[k] = 1.0;
        DegreeMeasure { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, k: usize) -> f64 {
        self.weights.get(k).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().enumerate().map(|(k, &w)| k as f64 * w).sum()
    }

    pub fn total_variation(&self, other: &DegreeMeasure) -> f64 {
        let len = self.weights.len().max(other.weights.len());
        0.5 * (0..len).map(|k| (self.get(k) - other.get(k)).abs()).sum::<f64>()
    }
}

#[derive(Serialize, Deserialize)]
struct DegreeRepr {
    weights: Vec<(u64, f64)>,
}

impl From<DegreeMeasure> for DegreeRepr {
    fn from(d: DegreeMeasure) -> Self {
        DegreeRepr {
            weights: d.weights.into_iter().enumerate().map(|(k, w)| (k as u64, w)).collect(),
        }
    }
}

impl TryFrom<DegreeRepr> for DegreeMeasure {
    type Error = Error;

    fn try_from(r: DegreeRepr) -> Result<Self> {
        let len = r.weights.iter().map(|&(k, _)| k as usize + 1).max().unwrap_or(0);
        let mut weights = vec![0.0; len];
        for (k, w) in r.weights {
            if weights[k as usize] != 0.0 {
                return Err(Error::InvalidMeasure(format!("degree {k} listed twice")));
            }
            weights[k as usize] = w;
        }
        DegreeMeasure::new(weights)
    }
}

// ---------------------------------------------------------------------------
// Functionals

/// `Δ₁(μ)`: the symbol marginal.
pub fn marginal_symbol(mu: &NeighbourhoodMeasure) -> SymbolMeasure {
    let mut weights = vec![0.0; mu.alphabet.len()];
    for ((a, _), w) in mu.iter() {
        weights[*a] += w;
    }
    SymbolMeasure {
        alphabet: mu.alphabet.clone(),
        weights,
    }
}

/// `Δ₂(μ)(b, a) = Σ_ℓ μ(a, ℓ) ℓ(b)`.
pub fn pair_projection(mu: &NeighbourhoodMeasure) -> PairMeasure {
    let m = mu.alphabet.len();
    let mut entries = vec![0.0; m * m];
    for ((a, l), w) in mu.iter() {
        for (b, &count) in l.counts().iter().enumerate() {
            entries[b * m + a] += w * count as f64;
        }
    }
    PairMeasure {
        alphabet: mu.alphabet.clone(),
        entries,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Consistency {
    Consistent,
    SubConsistent,
    Neither,
}

/// Compares `Δ₂(μ)` with `π` entrywise at tolerance [`CONSISTENCY_TOL`].
pub fn check_consistency(pi: &PairMeasure, mu: &NeighbourhoodMeasure) -> Result<Consistency> {
    pi.alphabet.ensure_same(&mu.alphabet)?;
    let projected = pair_projection(mu);
    let mut all_equal = true;
    for (&target, &got) in pi.entries.iter().zip(&projected.entries) {
        let slack = target - got;
        if slack < -CONSISTENCY_TOL {
            return Ok(Consistency::Neither);
        }
        if slack > CONSISTENCY_TOL {
            all_equal = false;
        }
    }
    Ok(if all_equal {
        Consistency::Consistent
    } else {
        Consistency::SubConsistent
    })
}

/// `½ Σ |μ − μ′|` over the union of supports.
pub fn total_variation(mu: &NeighbourhoodMeasure, other: &NeighbourhoodMeasure) -> Result<f64> {
    mu.alphabet.ensure_same(&other.alphabet)?;
    let mut sum = 0.0;
    for (key, w) in mu.iter() {
        sum += (w - other.weights.get(key).copied().unwrap_or(0.0)).abs();
    }
    for (key, w) in other.iter() {
        if !mu.weights.contains_key(key) {
            sum += w;
        }
    }
    Ok(0.5 * sum)
}

/// Law of the degree `Σ_b ℓ(b)` under `μ`.
pub fn degree_projection(mu: &NeighbourhoodMeasure) -> DegreeMeasure {
    let mut weights = Vec::new();
    for ((_, l), w) in mu.iter() {
        let k = l.degree() as usize;
        if weights.len() <= k {
            weights.resize(k + 1, 0.0);
        }
        weights[k] += w;
    }
    if weights.is_empty() {
        weights.push(0.0);
    }
    DegreeMeasure { weights }
}

/// `H(p ‖ q) = Σ p log(p / q)` with `q` given through its logarithm.
///
/// Terms with `p = 0` contribute nothing; `p > 0` where `log q = −∞` gives `+∞`.
pub fn relative_entropy_ln<K>(p: impl IntoIterator<Item = (K, f64)>, mut ln_q: impl FnMut(&K) -> f64) -> ExtReal {
    let mut sum = 0.0;
    for (key, w) in p {
        if w <= 0.0 {
            continue;
        }
        let lq = ln_q(&key);
        if lq == f64::NEG_INFINITY {
            return ExtReal::Infinite;
        }
        sum += w * (w.ln() - lq);
    }
    ExtReal::Finite(sum)
}

/// `H(p ‖ q)` with `q` given by its masses.
pub fn relative_entropy<K>(p: impl IntoIterator<Item = (K, f64)>, mut q: impl FnMut(&K) -> f64) -> ExtReal {
    relative_entropy_ln(p, |k| {
        let v = q(k);
        if v > 0.0 {
            v.ln()
        } else {
            f64::NEG_INFINITY
        }
    })
}

/// `ln q_c(k)` for the Poisson law with mean `c ≥ 0`.
pub fn poisson_ln_pmf(c: f64, k: u64) -> f64 {
    if c == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -c + k as f64 * c.ln() - ln_factorial(k)
}

/// The product-Poisson reference measure built from `(ν, π)`:
/// `Poi(a, ℓ) = ν(a) Π_b e^{−π(b,a)/ν(a)} (π(b,a)/ν(a))^{ℓ(b)} / ℓ(b)!`.
#[derive(Debug, Clone)]
pub struct PoissonReference {
    nu: SymbolMeasure,
    /// `intensity[a * m + b] = π(b, a) / ν(a)`, zero when `ν(a) = 0`.
    intensity: Vec<f64>,
}

impl PoissonReference {
    pub fn new(nu: &SymbolMeasure, pi: &PairMeasure) -> Result<Self> {
        nu.alphabet.ensure_same(&pi.alphabet)?;
        let m = nu.alphabet.len();
        let mut intensity = vec![0.0; m * m];
        for a in 0..m {
            let mass = nu.get(a);
            for b in 0..m {
                let p = pi.get(b, a);
                if mass == 0.0 {
                    if p > 0.0 {
                        return Err(Error::Domain(format!(
                            "ν({}) = 0 but π({}, {}) = {p} > 0: Poisson intensity undefined",
                            nu.alphabet.name(a),
                            nu.alphabet.name(b),
                            nu.alphabet.name(a)
                        )));
                    }
                } else {
                    intensity[a * m + b] = p / mass;
                }
            }
        }
        Ok(PoissonReference {
            nu: nu.clone(),
            intensity,
        })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.nu.alphabet
    }

    /// `π(b, a) / ν(a)`.
    pub fn intensity(&self, b: usize, a: usize) -> f64 {
        self.intensity[a * self.nu.alphabet.len() + b]
    }

    pub fn ln_mass(&self, a: usize, profile: &LocalProfile) -> f64 {
        let mass = self.nu.get(a);
        if mass == 0.0 {
            return f64::NEG_INFINITY;
        }
        let mut ln = mass.ln();
        for (b, &count) in profile.counts().iter().enumerate() {
            ln += poisson_ln_pmf(self.intensity(b, a), count as u64);
        }
        ln
    }

    pub fn mass(&self, a: usize, profile: &LocalProfile) -> f64 {
        self.ln_mass(a, profile).exp()
    }

    /// All profiles of symbol `a` with degree at most `max_degree`, with masses.
    pub fn enumerate_symbol(&self, a: usize, max_degree: u32) -> Vec<(LocalProfile, f64)> {
        let m = self.nu.alphabet.len();
        let mut out = Vec::new();
        let mut current = vec![0u32; m];
        fn rec(
            me: &PoissonReference,
            a: usize,
            pos: usize,
            left: u32,
            current: &mut Vec<u32>,
            out: &mut Vec<(LocalProfile, f64)>,
        ) {
            if pos == current.len() {
                let l = LocalProfile::new(current.clone());
                let w = me.mass(a, &l);
                out.push((l, w));
                return;
            }
            for v in 0..=left {
                current[pos] = v;
                rec(me, a, pos + 1, left - v, current, out);
            }
            current[pos] = 0;
        }
        rec(self, a, 0, max_degree, &mut current, &mut out);
        out
    }

    /// `Poi` restricted to profiles of degree at most `max_degree` (not renormalised).
    pub fn truncated(&self, max_degree: u32) -> BTreeMap<ProfileKey, f64> {
        let mut out = BTreeMap::new();
        for a in 0..self.nu.alphabet.len() {
            if self.nu.get(a) == 0.0 {
                continue;
            }
            for (l, w) in self.enumerate_symbol(a, max_degree) {
                if w > 0.0 {
                    out.insert((a, l), w);
                }
            }
        }
        out
    }
}

/// `Poi(a, ℓ)` for `(ν, π)`.
pub fn poi_mass(nu: &SymbolMeasure, pi: &PairMeasure, a: usize, profile: &LocalProfile) -> Result<f64> {
    let reference = PoissonReference::new(nu, pi)?;
    if profile.len() != nu.alphabet.len() {
        return Err(Error::InvalidMeasure("profile length does not match alphabet".into()));
    }
    Ok(reference.mass(a, profile))
}

/// `H(μ ‖ Poi)` with `Poi` built from `(ν, π)`.
pub fn entropy_against_poisson(mu: &NeighbourhoodMeasure, reference: &PoissonReference) -> Result<ExtReal> {
    mu.alphabet.ensure_same(reference.alphabet())?;
    Ok(relative_entropy_ln(mu.iter(), |(a, l)| reference.ln_mass(*a, l)))
}

// ---------------------------------------------------------------------------
// Quantized targets and exact empirical measures

/// A pair `(ν_n, π_n)` in `W_n × W̃_n`, held as integer counts:
/// `n ν_n(a)` vertices of symbol `a` and `n π_n(b, a)` symbol-`b` balls
/// (endpoint incidences) in symbol-`a` bins.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuantizedTargets {
    alphabet: Alphabet,
    n: u64,
    symbol_counts: Vec<u64>,
    ball_counts: Vec<u64>,
}

impl QuantizedTargets {
    /// `ball_counts[b * m + a] = n π_n(b, a)`: symmetric with even diagonal.
    pub fn new(alphabet: Alphabet, n: u64, symbol_counts: Vec<u64>, ball_counts: Vec<u64>) -> Result<Self> {
        let m = alphabet.len();
        if n == 0 {
            return Err(Error::Domain("n must be at least 1".into()));
        }
        if symbol_counts.len() != m || ball_counts.len() != m * m {
            return Err(Error::InvalidMeasure("target counts do not fit the alphabet".into()));
        }
        let total: u64 = symbol_counts.iter().sum();
        if total != n {
            return Err(Error::NotQuantized {
                n,
                what: format!("symbol counts sum to {total}"),
            });
        }
        for b in 0..m {
            if !ball_counts[b * m + b].is_multiple_of(2) {
                return Err(Error::NotQuantized {
                    n,
                    what: format!(
                        "n·π({0}, {0}) = {1} is odd, so (n/2)·π({0}, {0}) is not an integer",
                        alphabet.name(b),
                        ball_counts[b * m + b]
                    ),
                });
            }
            for a in 0..b {
                if ball_counts[b * m + a] != ball_counts[a * m + b] {
                    return Err(Error::InvalidMeasure(format!(
                        "pair counts not symmetric at ({}, {})",
                        alphabet.name(b),
                        alphabet.name(a)
                    )));
                }
            }
        }
        Ok(QuantizedTargets {
            alphabet,
            n,
            symbol_counts,
            ball_counts,
        })
    }

    /// One symbol, `n` vertices, `edges` edges: `π_n = 2·edges/n`.
    pub fn single_color(n: u64, edges: u64) -> Result<Self> {
        QuantizedTargets::new(Alphabet::standard(1), n, vec![n], vec![2 * edges])
    }

    /// Reads off the counts of measures already in `W_n × W̃_n` (to within 1e-9).
    pub fn from_measures(nu: &SymbolMeasure, pi: &PairMeasure, n: u64) -> Result<Self> {
        nu.alphabet.ensure_same(&pi.alphabet)?;
        if n == 0 {
            return Err(Error::Domain("n must be at least 1".into()));
        }
        let as_count = |x: f64, what: String| -> Result<u64> {
            let scaled = x * n as f64;
            let rounded = scaled.round();
            if (scaled - rounded).abs() > 1e-9 || rounded < 0.0 {
                Err(Error::NotQuantized {
                    n,
                    what: format!("{what} = {scaled} is not an integer"),
                })
            } else {
                Ok(rounded as u64)
            }
        };
        let m = nu.alphabet.len();
        let symbol_counts = (0..m)
            .map(|a| as_count(nu.get(a), format!("n·ν({})", nu.alphabet.name(a))))
            .collect::<Result<Vec<_>>>()?;
        let mut ball_counts = Vec::with_capacity(m * m);
        for b in 0..m {
            for a in 0..m {
                ball_counts.push(as_count(
                    pi.get(b, a),
                    format!("n·π({}, {})", nu.alphabet.name(b), nu.alphabet.name(a)),
                )?);
            }
        }
        QuantizedTargets::new(nu.alphabet.clone(), n, symbol_counts, ball_counts)
    }

    /// Nearest element of `W_n × W̃_n` by largest-remainder rounding.
    ///
    /// `ν` is rounded to counts summing to `n`. `π` is rounded on the upper
    /// triangle in units of edges (`n π(b,a)` off the diagonal, `n π(a,a) / 2` on
    /// it) with the edge total rounded to the nearest integer, then mirrored.
    /// Ties go to the lower canonical index.
    pub fn quantize(nu: &SymbolMeasure, pi: &PairMeasure, n: u64) -> Result<Self> {
        nu.alphabet.ensure_same(&pi.alphabet)?;
        if n == 0 {
            return Err(Error::Domain("n must be at least 1".into()));
        }
        let m = nu.alphabet.len();
        let nf = n as f64;
        let symbol_counts = largest_remainder(&nu.weights.iter().map(|w| w * nf).collect::<Vec<_>>(), n);

        let mut upper = Vec::new();
        let mut slots = Vec::new();
        for b in 0..m {
            for a in b..m {
                let edges = if a == b {
                    pi.get(b, a) * nf / 2.0
                } else {
                    pi.get(b, a) * nf
                };
                upper.push(edges);
                slots.push((b, a));
            }
        }
        let edge_total = upper.iter().sum::<f64>().round() as u64;
        let edges = largest_remainder(&upper, edge_total);
        let mut ball_counts = vec![0; m * m];
        for (&(b, a), &e) in slots.iter().zip(&edges) {
            if a == b {
                ball_counts[b * m + a] = 2 * e;
            } else {
                ball_counts[b * m + a] = e;
                ball_counts[a * m + b] = e;
            }
        }
        QuantizedTargets::new(nu.alphabet.clone(), n, symbol_counts, ball_counts)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn symbol_counts(&self) -> &[u64] {
        &self.symbol_counts
    }

    /// `n ν_n(a)`.
    pub fn symbol_count(&self, a: usize) -> u64 {
        self.symbol_counts[a]
    }

    pub fn ball_counts(&self) -> &[u64] {
        &self.ball_counts
    }

    /// `n π_n(b, a)`: symbol-`b` balls in symbol-`a` bins.
    pub fn ball_count(&self, b: usize, a: usize) -> u64 {
        self.ball_counts[b * self.alphabet.len() + a]
    }

    pub fn total_balls(&self) -> u64 {
        self.ball_counts.iter().sum()
    }

    /// `m_n(b, a)`: number of edges between symbol classes `a` and `b`.
    pub fn edge_budget(&self, b: usize, a: usize) -> u64 {
        let balls = self.ball_count(b, a);
        if a == b {
            balls / 2
        } else {
            balls
        }
    }

    /// Number of admissible vertex pairs between classes `a` and `b`.
    pub fn edge_capacity(&self, b: usize, a: usize) -> u64 {
        let (ka, kb) = (self.symbol_count(a), self.symbol_count(b));
        if a == b {
            ka * ka.saturating_sub(1) / 2
        } else {
            ka * kb
        }
    }

    /// Every symbol class with balls to receive has at least one bin.
    pub fn check_bins(&self) -> Result<()> {
        let m = self.alphabet.len();
        for a in 0..m {
            let balls: u64 = (0..m).map(|b| self.ball_count(b, a)).sum();
            if balls > 0 && self.symbol_count(a) == 0 {
                return Err(Error::EmptySymbolClass {
                    symbol: self.alphabet.name(a).to_owned(),
                    balls,
                });
            }
        }
        Ok(())
    }

    /// Edge budgets fit into the admissible vertex pairs.
    pub fn check_feasible(&self) -> Result<()> {
        let m = self.alphabet.len();
        for b in 0..m {
            for a in b..m {
                let (budget, capacity) = (self.edge_budget(b, a), self.edge_capacity(b, a));
                if budget > capacity {
                    return Err(Error::Infeasible {
                        b: self.alphabet.name(b).to_owned(),
                        a: self.alphabet.name(a).to_owned(),
                        budget,
                        capacity,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn nu(&self) -> SymbolMeasure {
        let nf = self.n as f64;
        SymbolMeasure {
            alphabet: self.alphabet.clone(),
            weights: self.symbol_counts.iter().map(|&c| c as f64 / nf).collect(),
        }
    }

    pub fn pi(&self) -> PairMeasure {
        let nf = self.n as f64;
        PairMeasure {
            alphabet: self.alphabet.clone(),
            entries: self.ball_counts.iter().map(|&c| c as f64 / nf).collect(),
        }
    }

    /// `Poi_n` built from `(ν_n, π_n)`.
    pub fn poisson_reference(&self) -> Result<PoissonReference> {
        PoissonReference::new(&self.nu(), &self.pi())
    }
}

fn largest_remainder(values: &[f64], total: u64) -> Vec<u64> {
    let mut counts: Vec<u64> = values.iter().map(|v| v.max(0.0).floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..values.len()).collect();
    let frac = |i: usize| values[i].max(0.0) - values[i].max(0.0).floor();
    order.sort_by(|&i, &j| frac(j).total_cmp(&frac(i)).then(i.cmp(&j)));
    if assigned <= total {
        for &i in order.iter().cycle().take((total - assigned) as usize) {
            counts[i] += 1;
        }
    } else {
        // Floors overshoot only if values were inconsistent with `total`;
        // take back from the smallest remainders that still have a count.
        let mut excess = assigned - total;
        for &i in order.iter().rev().cycle() {
            if excess == 0 {
                break;
            }
            if counts[i] > 0 {
                counts[i] -= 1;
                excess -= 1;
            }
        }
    }
    counts
}

/// `(ν_n, π_n)` from [`QuantizedTargets::quantize`], as measures.
pub fn quantize_targets(nu: &SymbolMeasure, pi: &PairMeasure, n: u64) -> Result<(SymbolMeasure, PairMeasure)> {
    let q = QuantizedTargets::quantize(nu, pi, n)?;
    Ok((q.nu(), q.pi()))
}

/// `m_n(b, a)` from a quantized pair measure.
pub fn edge_budget(pi_n: &PairMeasure, n: u64) -> Result<Vec<u64>> {
    let m = pi_n.alphabet.len();
    let mut out = Vec::with_capacity(m * m);
    for b in 0..m {
        for a in 0..m {
            let value = if a == b {
                pi_n.get(b, a) * n as f64 / 2.0
            } else {
                pi_n.get(b, a) * n as f64
            };
            let rounded = value.round();
            if (value - rounded).abs() > 1e-9 {
                return Err(Error::NotQuantized {
                    n,
                    what: format!(
                        "m_n({}, {}) = {value} is not an integer",
                        pi_n.alphabet.name(b),
                        pi_n.alphabet.name(a)
                    ),
                });
            }
            out.push(rounded as u64);
        }
    }
    Ok(out)
}

/// An empirical neighbourhood (or occupancy) measure with exact weights
/// `count / n`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "EmpiricalRepr", into = "EmpiricalRepr")]
pub struct EmpiricalNeighbourhood {
    alphabet: Alphabet,
    n: u64,
    counts: BTreeMap<ProfileKey, u64>,
}

impl EmpiricalNeighbourhood {
    pub fn new(alphabet: Alphabet, n: u64, counts: BTreeMap<ProfileKey, u64>) -> Result<Self> {
        let mut total = 0;
        for (key, &c) in &counts {
            check_profile(&alphabet, key)?;
            if c == 0 {
                return Err(Error::InvalidMeasure("zero count stored in empirical measure".into()));
            }
            total += c;
        }
        if total != n {
            return Err(Error::InvalidMeasure(format!(
                "counts sum to {total}, expected n = {n}"
            )));
        }
        Ok(EmpiricalNeighbourhood { alphabet, n, counts })
    }

    /// Counts one `(symbol, profile)` per vertex or bin.
    pub fn from_profiles<'a>(
        alphabet: Alphabet,
        symbols: &[usize],
        profiles: impl IntoIterator<Item = &'a LocalProfile>,
    ) -> Self {
        let mut counts = BTreeMap::new();
        let mut n = 0;
        for (&a, l) in symbols.iter().zip(profiles) {
            *counts.entry((a, l.clone())).or_insert(0) += 1;
            n += 1;
        }
        EmpiricalNeighbourhood { alphabet, n, counts }
    }

    /// Quantizes a float measure; fails unless every `n μ(a, ℓ)` is an integer.
    pub fn from_measure(mu: &NeighbourhoodMeasure, n: u64) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for (key, w) in mu.iter() {
            let scaled = w * n as f64;
            let rounded = scaled.round();
            if (scaled - rounded).abs() > 1e-9 {
                return Err(Error::NotQuantized {
                    n,
                    what: format!("n·μ({}, {:?}) = {scaled}", mu.alphabet.name(key.0), key.1.counts()),
                });
            }
            if rounded > 0.0 {
                counts.insert(key.clone(), rounded as u64);
            }
        }
        EmpiricalNeighbourhood::new(mu.alphabet.clone(), n, counts)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn counts(&self) -> &BTreeMap<ProfileKey, u64> {
        &self.counts
    }

    pub fn support_len(&self) -> usize {
        self.counts.len()
    }

    /// `n Δ₁(μ)(a)`.
    pub fn symbol_counts(&self) -> Vec<u64> {
        let mut out = vec![0; self.alphabet.len()];
        for ((a, _), &c) in &self.counts {
            out[*a] += c;
        }
        out
    }

    /// `n Δ₂(μ)(b, a)`, row-major in `b`.
    pub fn pair_counts(&self) -> Vec<u64> {
        let m = self.alphabet.len();
        let mut out = vec![0; m * m];
        for ((a, l), &c) in &self.counts {
            for (b, &k) in l.counts().iter().enumerate() {
                out[b * m + a] += c * k as u64;
            }
        }
        out
    }

    /// Number of vertices (bins) per degree.
    pub fn degree_counts(&self) -> Vec<u64> {
        let mut out = vec![0u64];
        for ((_, l), &c) in &self.counts {
            let k = l.degree() as usize;
            if out.len() <= k {
                out.resize(k + 1, 0);
            }
            out[k] += c;
        }
        out
    }

    /// `Δ(μ) = (ν_n, π_n)`, compared exactly.
    pub fn matches_targets(&self, targets: &QuantizedTargets) -> bool {
        self.alphabet == targets.alphabet
            && self.n == targets.n
            && self.symbol_counts() == targets.symbol_counts
            && self.pair_counts() == targets.ball_counts
    }

    pub fn to_measure(&self) -> NeighbourhoodMeasure {
        let nf = self.n as f64;
        NeighbourhoodMeasure {
            alphabet: self.alphabet.clone(),
            weights: self.counts.iter().map(|(k, &c)| (k.clone(), c as f64 / nf)).collect(),
        }
    }

    pub fn degree_measure(&self) -> DegreeMeasure {
        let nf = self.n as f64;
        DegreeMeasure {
            weights: self.degree_counts().into_iter().map(|c| c as f64 / nf).collect(),
        }
    }

    /// Total variation distance, computed from counts.
    pub fn total_variation(&self, other: &EmpiricalNeighbourhood) -> Result<f64> {
        self.alphabet.ensure_same(&other.alphabet)?;
        if self.n != other.n {
            return total_variation(&self.to_measure(), &other.to_measure());
        }
        let mut diff = 0u64;
        for (key, &c) in &self.counts {
            diff += c.abs_diff(other.counts.get(key).copied().unwrap_or(0));
        }
        for (key, &c) in &other.counts {
            if !self.counts.contains_key(key) {
                diff += c;
            }
        }
        Ok(diff as f64 / (2 * self.n) as f64)
    }
}

#[derive(Serialize, Deserialize)]
struct EmpiricalRepr {
    n: u64,
    alphabet: Vec<String>,
    entries: Vec<(String, LocalProfile, u64)>,
}

impl From<EmpiricalNeighbourhood> for EmpiricalRepr {
    fn from(e: EmpiricalNeighbourhood) -> Self {
        EmpiricalRepr {
            n: e.n,
            alphabet: e.alphabet.symbols().to_vec(),
            entries: e
                .counts
                .iter()
                .map(|((a, l), &c)| (e.alphabet.name(*a).to_owned(), l.clone(), c))
                .collect(),
        }
    }
}

impl TryFrom<EmpiricalRepr> for EmpiricalNeighbourhood {
    type Error = Error;

    fn try_from(r: EmpiricalRepr) -> Result<Self> {
        let alphabet = Alphabet::new(r.alphabet)?;
        let mut counts = BTreeMap::new();
        for (s, l, c) in r.entries {
            let key = (alphabet.lookup(&s)?, l);
            if counts.insert(key, c).is_some() {
                return Err(Error::InvalidMeasure(format!("profile of symbol {s:?} listed twice")));
            }
        }
        EmpiricalNeighbourhood::new(alphabet, r.n, counts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ab() -> Alphabet {
        Alphabet::standard(2)
    }

    fn prof(v: &[u32]) -> LocalProfile {
        LocalProfile::new(v.to_vec())
    }

    #[test]
    fn alphabet_rejects_duplicates_and_empty() {
        assert!(Alphabet::new(["x", "x"]).is_err());
        assert!(Alphabet::new(Vec::<String>::new()).is_err());
        assert_eq!(Alphabet::new(["x", "y"]).unwrap().index_of("y"), Some(1));
    }

    #[test]
    fn marginal_of_point_mass_and_uniform() {
        let mu = NeighbourhoodMeasure::point_mass(ab(), 0, prof(&[0, 0])).unwrap();
        assert_eq!(marginal_symbol(&mu).weights(), &[1.0, 0.0]);

        let mu = NeighbourhoodMeasure::new(ab(), [((0, prof(&[1, 0])), 0.5), ((1, prof(&[2, 1])), 0.5)]).unwrap();
        assert_eq!(marginal_symbol(&mu).weights(), &[0.5, 0.5]);
    }

    #[test]
    fn pair_projection_examples() {
        let mu = NeighbourhoodMeasure::point_mass(ab(), 0, prof(&[0, 0])).unwrap();
        assert_eq!(pair_projection(&mu).total_mass(), 0.0);

        let one = Alphabet::standard(1);
        let mu = NeighbourhoodMeasure::point_mass(one, 0, prof(&[2])).unwrap();
        assert_eq!(pair_projection(&mu).get(0, 0), 2.0);

        // asymmetric projection is allowed
        let mu = NeighbourhoodMeasure::point_mass(ab(), 0, prof(&[0, 3])).unwrap();
        let p = pair_projection(&mu);
        assert_eq!(p.get(1, 0), 3.0);
        assert_eq!(p.get(0, 1), 0.0);
        assert!(!p.is_symmetric());
    }

    #[test]
    fn consistency_classes() {
        let mu = NeighbourhoodMeasure::new(ab(), [((0, prof(&[0, 1])), 0.5), ((1, prof(&[1, 0])), 0.5)]).unwrap();
        let exact = pair_projection(&mu);
        assert_eq!(check_consistency(&exact, &mu).unwrap(), Consistency::Consistent);

        let bigger = PairMeasure::new(ab(), exact.entries().iter().map(|x| x + 0.1).collect()).unwrap();
        assert_eq!(check_consistency(&bigger, &mu).unwrap(), Consistency::SubConsistent);

        let smaller = PairMeasure::new(ab(), vec![0.0, 0.4, 0.4, 0.0]).unwrap();
        assert_eq!(check_consistency(&smaller, &mu).unwrap(), Consistency::Neither);

        let other = PairMeasure::single(1.0).unwrap();
        assert!(matches!(
            check_consistency(&other, &mu),
            Err(Error::AlphabetMismatch { .. })
        ));
    }

    #[test]
    fn total_variation_examples() {
        let one = Alphabet::standard(1);
        let l1 = prof(&[1]);
        let l2 = prof(&[2]);
        let half = NeighbourhoodMeasure::new(one.clone(), [((0, l1.clone()), 0.5), ((0, l2.clone()), 0.5)]).unwrap();
        let point = NeighbourhoodMeasure::point_mass(one.clone(), 0, l1).unwrap();
        assert_eq!(total_variation(&half, &half).unwrap(), 0.0);
        assert_eq!(total_variation(&half, &point).unwrap(), 0.5);
        let far = NeighbourhoodMeasure::point_mass(one, 0, prof(&[7])).unwrap();
        assert_eq!(total_variation(&point, &far).unwrap(), 1.0);
    }

    #[test]
    fn degree_projection_examples() {
        let mu = NeighbourhoodMeasure::point_mass(ab(), 1, prof(&[0, 0])).unwrap();
        assert_eq!(degree_projection(&mu).weights(), &[1.0]);

        let mu = NeighbourhoodMeasure::new(ab(), [((0, prof(&[1, 1])), 0.5), ((1, prof(&[2, 0])), 0.5)]).unwrap();
        assert_eq!(degree_projection(&mu), DegreeMeasure::point_mass(2));

        let one = Alphabet::standard(1);
        let mu = NeighbourhoodMeasure::new(
            one,
            [((0, prof(&[0])), 0.25), ((0, prof(&[1])), 0.5), ((0, prof(&[3])), 0.25)],
        )
        .unwrap();
        let d = degree_projection(&mu);
        for k in 0..5 {
            assert_eq!(d.get(k), mu.get(0, &prof(&[k as u32])));
        }
    }

    #[test]
    fn relative_entropy_examples() {
        let p = [(0u64, 0.3), (1, 0.7)];
        assert_eq!(
            relative_entropy(p, |&k| if k == 0 { 0.3 } else { 0.7 }),
            ExtReal::Finite(0.0)
        );

        // δ₁ against Poisson(1): log(1 / e^{-1}) = 1
        let h = relative_entropy_ln([(1u64, 1.0)], |&k| poisson_ln_pmf(1.0, k))
            .finite()
            .unwrap();
        assert!((h - 1.0).abs() < 1e-15);

        assert_eq!(relative_entropy([(3u64, 1.0)], |_| 0.0), ExtReal::Infinite);
        // zero mass on a q-null point is fine
        assert_eq!(
            relative_entropy([(3u64, 0.0), (1, 1.0)], |&k| if k == 1 { 1.0 } else { 0.0 }),
            ExtReal::Finite(0.0)
        );
    }

    #[test]
    fn poi_mass_examples() {
        let nu = SymbolMeasure::uniform(ab());
        let zero = PairMeasure::zero(ab());
        assert_eq!(poi_mass(&nu, &zero, 0, &prof(&[0, 0])).unwrap(), 0.5);
        assert_eq!(poi_mass(&nu, &zero, 0, &prof(&[1, 0])).unwrap(), 0.0);

        let one = Alphabet::standard(1);
        let nu1 = SymbolMeasure::point_mass(one, 0);
        let c = 1.7;
        let pi1 = PairMeasure::single(c).unwrap();
        for k in 0..8u32 {
            let expect = (-c).exp() * c.powi(k as i32) / (1..=k).map(|i| i as f64).product::<f64>();
            let got = poi_mass(&nu1, &pi1, 0, &prof(&[k])).unwrap();
            assert!((got - expect).abs() < 1e-15 * expect.max(1.0), "k={k}");
        }

        // two colours, ν = (½, ½), π(a,b) = π(b,a) = ¼: intensity of b-neighbours
        // at an a-vertex is ½, of a-neighbours 0.
        let pi = PairMeasure::new(ab(), vec![0.0, 0.25, 0.25, 0.0]).unwrap();
        let got = poi_mass(&nu, &pi, 0, &prof(&[0, 1])).unwrap();
        let factor_a = 1.0; // Poisson(0) at 0
        let factor_b = 0.5 * (-0.5f64).exp(); // Poisson(½) at 1
        assert!((got - 0.5 * factor_a * factor_b).abs() < 1e-16);
    }

    #[test]
    fn poi_mass_rejects_undefined_intensity() {
        let nu = SymbolMeasure::point_mass(ab(), 0);
        let pi = PairMeasure::new(ab(), vec![0.0, 0.25, 0.25, 0.0]).unwrap();
        assert!(matches!(poi_mass(&nu, &pi, 0, &prof(&[0, 1])), Err(Error::Domain(_))));
    }

    #[test]
    fn poi_truncated_mass_converges() {
        // intensities ≤ 5, degree ≤ 50
        let nu = SymbolMeasure::new(ab(), vec![0.4, 0.6]).unwrap();
        let pi = PairMeasure::new(ab(), vec![2.0, 1.2, 1.2, 3.0]).unwrap();
        let reference = PoissonReference::new(&nu, &pi).unwrap();
        for a in 0..2 {
            assert!(reference.intensity(0, a) <= 5.0 && reference.intensity(1, a) <= 5.0);
            let mut prev = 0.0;
            for max_degree in [5, 20, 50] {
                let total: f64 = reference.enumerate_symbol(a, max_degree).iter().map(|(_, w)| w).sum();
                assert!(total >= prev);
                prev = total;
            }
            assert!(nu.get(a) - prev < 1e-12, "deficit {}", nu.get(a) - prev);
        }
    }

    #[test]
    fn quantize_examples() {
        let nu = SymbolMeasure::new(ab(), vec![0.6, 0.4]).unwrap();
        let pi = PairMeasure::zero(ab());
        let (nu2, pi2) = quantize_targets(&nu, &pi, 2).unwrap();
        assert_eq!(nu2.weights(), &[0.5, 0.5]);
        assert_eq!(pi2.total_mass(), 0.0);

        let nu = SymbolMeasure::new(ab(), vec![0.25, 0.75]).unwrap();
        let pi = PairMeasure::new(ab(), vec![0.5, 0.25, 0.25, 1.0]).unwrap();
        let (nu4, pi4) = quantize_targets(&nu, &pi, 4).unwrap();
        assert_eq!(nu4, nu);
        assert_eq!(pi4, pi);
    }

    #[test]
    fn from_measures_rejects_unquantized() {
        let pi = PairMeasure::single(1.0).unwrap();
        let nu = SymbolMeasure::point_mass(Alphabet::standard(1), 0);
        // n π(a,a) = 3 is odd: half an edge
        assert!(matches!(
            QuantizedTargets::from_measures(&nu, &pi, 3),
            Err(Error::NotQuantized { .. })
        ));
        assert!(QuantizedTargets::from_measures(&nu, &pi, 4).is_ok());
    }

    #[test]
    fn edge_budget_examples() {
        assert_eq!(edge_budget(&PairMeasure::single(1.0).unwrap(), 2).unwrap(), vec![1]);
        let pi = PairMeasure::new(ab(), vec![0.0, 0.5, 0.5, 0.0]).unwrap();
        assert_eq!(edge_budget(&pi, 4).unwrap(), vec![0, 2, 2, 0]);
        assert_eq!(edge_budget(&PairMeasure::zero(ab()), 5).unwrap(), vec![0; 4]);
        assert!(edge_budget(&PairMeasure::single(1.0).unwrap(), 3).is_err());
    }

    #[test]
    fn feasibility_names_pair() {
        let t = QuantizedTargets::single_color(2, 2).unwrap();
        match t.check_feasible() {
            Err(Error::Infeasible { budget, capacity, .. }) => assert_eq!((budget, capacity), (2, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_is_canonical() {
        let mu = NeighbourhoodMeasure::new(ab(), [((1, prof(&[0, 2])), 0.5), ((0, prof(&[1, 0])), 0.5)]).unwrap();
        let s = serde_json::to_string(&mu).unwrap();
        assert_eq!(
            s,
            r#"{"alphabet":["a","b"],"entries":[["a",[1,0],0.5],["b",[0,2],0.5]]}"#
        );
        let back: NeighbourhoodMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, mu);

        let pi = PairMeasure::new(ab(), vec![0.0, 0.25, 0.25, 1.0]).unwrap();
        let s = serde_json::to_string(&pi).unwrap();
        assert_eq!(
            s,
            r#"{"alphabet":["a","b"],"entries":[["a","a",0.0],["a","b",0.25],["b","a",0.25],["b","b",1.0]]}"#
        );
        assert_eq!(serde_json::from_str::<PairMeasure>(&s).unwrap(), pi);

        let bad = r#"{"alphabet":["a","b"],"entries":[["a","b",0.25]]}"#;
        assert!(serde_json::from_str::<PairMeasure>(bad).is_err());
    }

    fn arb_measure() -> impl Strategy<Value = NeighbourhoodMeasure> {
        prop::collection::vec(((0usize..2, 0u32..3, 0u32..3), 0.01f64..1.0), 1..6).prop_map(|raw| {
            let mut acc: BTreeMap<ProfileKey, f64> = BTreeMap::new();
            for ((a, x, y), w) in raw {
                *acc.entry((a, LocalProfile::new(vec![x, y]))).or_insert(0.0) += w;
            }
            let total: f64 = acc.values().sum();
            let mut entries: Vec<_> = acc.into_iter().map(|(k, w)| (k, w / total)).collect();
            // absorb rounding into the first entry
            let drift = 1.0 - entries.iter().map(|(_, w)| w).sum::<f64>();
            entries[0].1 += drift;
            NeighbourhoodMeasure::new(Alphabet::standard(2), entries).unwrap()
        })
    }

    proptest! {
        #[test]
        fn total_variation_is_a_metric(x in arb_measure(), y in arb_measure(), z in arb_measure()) {
            let dxy = total_variation(&x, &y).unwrap();
            let dyx = total_variation(&y, &x).unwrap();
            prop_assert!((dxy - dyx).abs() < 1e-15);
            prop_assert!(total_variation(&x, &x).unwrap() < 1e-15);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&dxy));
            let dxz = total_variation(&x, &z).unwrap();
            let dzy = total_variation(&z, &y).unwrap();
            prop_assert!(dxy <= dxz + dzy + 1e-12);
        }

        #[test]
        fn relative_entropy_is_nonnegative(x in arb_measure(), y in arb_measure()) {
            let yw: BTreeMap<ProfileKey, f64> = y.iter().map(|(k, w)| (k.clone(), w)).collect();
            match relative_entropy(x.iter(), |k| yw.get(*k).copied().unwrap_or(0.0)) {
                ExtReal::Finite(h) => prop_assert!(h >= -1e-12),
                ExtReal::Infinite => {}
            }
            let same = relative_entropy(x.iter(), |k| x.get(k.0, &k.1)).finite().unwrap();
            prop_assert!(same.abs() < 1e-12);
        }

        #[test]
        fn quantize_lands_in_quantized_space(
            w in prop::collection::vec(0.0f64..1.0, 3),
            p in prop::collection::vec(0.0f64..3.0, 6),
            n in 1u64..200,
        ) {
            let alphabet = Alphabet::standard(3);
            let total: f64 = w.iter().sum::<f64>() + 1e-9;
            let mut weights: Vec<f64> = w.iter().map(|x| (x + 1e-9 / 3.0) / total).collect();
            let drift = 1.0 - weights.iter().sum::<f64>();
            weights[0] += drift;
            let nu = SymbolMeasure::new(alphabet.clone(), weights).unwrap();
            let upper = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
            let mut entries = vec![0.0; 9];
            for (&(b, a), &v) in upper.iter().zip(&p) {
                entries[b * 3 + a] = v;
                entries[a * 3 + b] = v;
            }
            let pi = PairMeasure::new(alphabet, entries).unwrap();
            let q = QuantizedTargets::quantize(&nu, &pi, n).unwrap();
            // integrality: `new` re-validates; ν_n sums to one
            prop_assert_eq!(q.symbol_counts().iter().sum::<u64>(), n);
            for b in 0..3 {
                prop_assert_eq!(q.ball_count(b, b) % 2, 0);
            }
            let bound = 9.0 / n as f64;
            prop_assert!(q.nu().total_variation(&nu).unwrap() <= bound);
            for (x, y) in q.pi().entries().iter().zip(pi.entries()) {
                prop_assert!((x - y).abs() <= bound, "{} vs {}", x, y);
            }
            prop_assert!(q.pi().is_symmetric());
        }
    }
}
