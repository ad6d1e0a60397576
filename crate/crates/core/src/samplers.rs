//! Random generation of symbolled graphs, conditioned graphs, random
//! allocations and the coupling between the last two.
//!
//! All samplers take an injected `Rng`; one sample is generated on one thread.

use std::collections::{BTreeSet, HashSet};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{
    degree_projection, Alphabet, DegreeMeasure, EmpiricalNeighbourhood, LocalProfile, NeighbourhoodMeasure,
    PairMeasure, QuantizedTargets, SymbolMeasure,
};

/// Parameters of the unconditioned symbolled graph: i.i.d. symbols and
/// independent edges with probability `min(C(a, b) / n, 1)`.
#[derive(Debug, Clone)]
pub struct GraphParams {
    n: u64,
    symbol_law: SymbolMeasure,
    kernel: Vec<f64>,
}

impl GraphParams {
    /// `kernel[b * m + a] = C(b, a)`; symmetric and non-negative.
    pub fn new(n: u64, symbol_law: SymbolMeasure, kernel: Vec<f64>) -> Result<Self> {
        // reuse the pair-measure checks
        PairMeasure::new(symbol_law.alphabet().clone(), kernel.clone())?;
        if n == 0 {
            return Err(Error::Domain("n must be at least 1".into()));
        }
        Ok(GraphParams { n, symbol_law, kernel })
    }

    pub fn single_color(n: u64, c: f64) -> Result<Self> {
        GraphParams::new(n, SymbolMeasure::point_mass(Alphabet::standard(1), 0), vec![c])
    }

    pub fn edge_probability(&self, b: usize, a: usize) -> f64 {
        let m = self.symbol_law.alphabet().len();
        (self.kernel[b * m + a] / self.n as f64).min(1.0)
    }
}

/// A simple graph on vertices `0..n` with one symbol per vertex.
///
/// The JSON form labels vertices `1..=n`, lists symbols by name and sorts the
/// edge list lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct ColoredGraph {
    alphabet: Alphabet,
    symbols: Vec<usize>,
    edges: BTreeSet<(u32, u32)>,
}

impl ColoredGraph {
    pub fn new(alphabet: Alphabet, symbols: Vec<usize>, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let n = symbols.len() as u32;
        if symbols.iter().any(|&a| a >= alphabet.len()) {
            return Err(Error::InvalidMeasure("vertex symbol outside the alphabet".into()));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::InvalidMeasure(format!("loop at vertex {u}")));
            }
            if u.max(v) >= n {
                return Err(Error::InvalidMeasure(format!("edge ({u}, {v}) outside 0..{n}")));
            }
            if !set.insert((u.min(v), u.max(v))) {
                return Err(Error::InvalidMeasure(format!("duplicate edge ({u}, {v})")));
            }
        }
        Ok(ColoredGraph {
            alphabet,
            symbols,
            edges: set,
        })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn n(&self) -> u64 {
        self.symbols.len() as u64
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn edges(&self) -> &BTreeSet<(u32, u32)> {
        &self.edges
    }

    /// Neighbour profile of every vertex.
    pub fn profiles(&self) -> Vec<LocalProfile> {
        let m = self.alphabet.len();
        let mut profiles = vec![LocalProfile::zero(m); self.symbols.len()];
        for &(u, v) in &self.edges {
            profiles[u as usize].increment(self.symbols[v as usize]);
            profiles[v as usize].increment(self.symbols[u as usize]);
        }
        profiles
    }

    pub fn neighbourhood(&self) -> EmpiricalNeighbourhood {
        EmpiricalNeighbourhood::from_profiles(self.alphabet.clone(), &self.symbols, &self.profiles())
    }

    /// `n L¹`.
    pub fn symbol_counts(&self) -> Vec<u64> {
        let mut out = vec![0; self.alphabet.len()];
        for &a in &self.symbols {
            out[a] += 1;
        }
        out
    }

    /// `n L²(b, a)`: each edge counted in both orders.
    pub fn pair_counts(&self) -> Vec<u64> {
        let m = self.alphabet.len();
        let mut out = vec![0; m * m];
        for &(u, v) in &self.edges {
            let (su, sv) = (self.symbols[u as usize], self.symbols[v as usize]);
            out[sv * m + su] += 1;
            out[su * m + sv] += 1;
        }
        out
    }

    pub fn isolated_count(&self) -> u64 {
        let mut touched = vec![false; self.symbols.len()];
        for &(u, v) in &self.edges {
            touched[u as usize] = true;
            touched[v as usize] = true;
        }
        touched.iter().filter(|&&t| !t).count() as u64
    }

    /// `(L¹, L², M, D)`; see [`EmpiricalMeasures`].
    pub fn empirical_measures(&self) -> EmpiricalMeasures {
        EmpiricalMeasures {
            alphabet: self.alphabet.clone(),
            n: self.n(),
            symbol_counts: self.symbol_counts(),
            pair_counts: self.pair_counts(),
            neighbourhood: self.neighbourhood(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: u64,
    alphabet: Vec<String>,
    symbols: Vec<String>,
    edges: Vec<(u32, u32)>,
}

impl From<ColoredGraph> for GraphRepr {
    fn from(g: ColoredGraph) -> Self {
        GraphRepr {
            n: g.n(),
            alphabet: g.alphabet.symbols().to_vec(),
            symbols: g.symbols.iter().map(|&a| g.alphabet.name(a).to_owned()).collect(),
            edges: g.edges.iter().map(|&(u, v)| (u + 1, v + 1)).collect(),
        }
    }
}

impl TryFrom<GraphRepr> for ColoredGraph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        let alphabet = Alphabet::new(r.alphabet)?;
        if r.symbols.len() as u64 != r.n {
            return Err(Error::InvalidMeasure(format!(
                "{} symbols for n = {}",
                r.symbols.len(),
                r.n
            )));
        }
        let symbols = r
            .symbols
            .iter()
            .map(|s| {
                alphabet
                    .index_of(s)
                    .ok_or_else(|| Error::InvalidMeasure(format!("unknown symbol {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut edges = Vec::with_capacity(r.edges.len());
        for (u, v) in r.edges {
            if u == 0 || v == 0 {
                return Err(Error::InvalidMeasure("vertices are labelled from 1".into()));
            }
            edges.push((u - 1, v - 1));
        }
        ColoredGraph::new(alphabet, symbols, edges)
    }
}

/// Exact empirical functionals of a graph or allocation, as counts over `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalMeasures {
    pub alphabet: Alphabet,
    pub n: u64,
    /// `n L¹(a)`.
    pub symbol_counts: Vec<u64>,
    /// `n L²(b, a)`, row-major in `b`.
    pub pair_counts: Vec<u64>,
    pub neighbourhood: EmpiricalNeighbourhood,
}

impl EmpiricalMeasures {
    pub fn symbol_measure(&self) -> SymbolMeasure {
        SymbolMeasure::new(
            self.alphabet.clone(),
            self.symbol_counts.iter().map(|&c| c as f64 / self.n as f64).collect(),
        )
        .expect("counts sum to n")
    }

    pub fn pair_measure(&self) -> PairMeasure {
        PairMeasure::new(
            self.alphabet.clone(),
            self.pair_counts.iter().map(|&c| c as f64 / self.n as f64).collect(),
        )
        .expect("edge counts are symmetric")
    }

    pub fn neighbourhood_measure(&self) -> NeighbourhoodMeasure {
        self.neighbourhood.to_measure()
    }

    pub fn degree_measure(&self) -> DegreeMeasure {
        degree_projection(&self.neighbourhood_measure())
    }

    /// `Δ(M) = (L¹, L²)` in integer arithmetic.
    pub fn projections_agree(&self) -> bool {
        self.neighbourhood.symbol_counts() == self.symbol_counts && self.neighbourhood.pair_counts() == self.pair_counts
    }

    /// The targets this graph realises, i.e. `(L¹, L²)` as quantized targets.
    pub fn targets(&self) -> QuantizedTargets {
        QuantizedTargets::new(
            self.alphabet.clone(),
            self.n,
            self.symbol_counts.clone(),
            self.pair_counts.clone(),
        )
        .expect("graph counts are quantized")
    }
}

/// Bins with a symbol each and the number of balls of every symbol they hold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AllocationRepr", into = "AllocationRepr")]
pub struct AllocationOutcome {
    alphabet: Alphabet,
    symbols: Vec<usize>,
    profiles: Vec<LocalProfile>,
}

impl AllocationOutcome {
    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn n(&self) -> u64 {
        self.symbols.len() as u64
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn profiles(&self) -> &[LocalProfile] {
        &self.profiles
    }

    /// The empirical occupancy measure.
    pub fn occupancy(&self) -> EmpiricalNeighbourhood {
        EmpiricalNeighbourhood::from_profiles(self.alphabet.clone(), &self.symbols, &self.profiles)
    }

    pub fn empty_bins(&self) -> u64 {
        self.profiles.iter().filter(|l| l.degree() == 0).count() as u64
    }
}

#[derive(Serialize, Deserialize)]
struct AllocationRepr {
    n: u64,
    alphabet: Vec<String>,
    symbols: Vec<String>,
    profiles: Vec<LocalProfile>,
}

impl From<AllocationOutcome> for AllocationRepr {
    fn from(o: AllocationOutcome) -> Self {
        AllocationRepr {
            n: o.n(),
            alphabet: o.alphabet.symbols().to_vec(),
            symbols: o.symbols.iter().map(|&a| o.alphabet.name(a).to_owned()).collect(),
            profiles: o.profiles,
        }
    }
}

impl TryFrom<AllocationRepr> for AllocationOutcome {
    type Error = Error;

    fn try_from(r: AllocationRepr) -> Result<Self> {
        let alphabet = Alphabet::new(r.alphabet)?;
        if r.symbols.len() as u64 != r.n || r.profiles.len() as u64 != r.n {
            return Err(Error::InvalidMeasure("allocation lengths do not match n".into()));
        }
        let symbols = r
            .symbols
            .iter()
            .map(|s| {
                alphabet
                    .index_of(s)
                    .ok_or_else(|| Error::InvalidMeasure(format!("unknown symbol {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if r.profiles.iter().any(|l| l.len() != alphabet.len()) {
            return Err(Error::InvalidMeasure("profile length does not match alphabet".into()));
        }
        Ok(AllocationOutcome {
            alphabet,
            symbols,
            profiles: r.profiles,
        })
    }
}

/// One draw of the coupling: a conditioned graph, an allocation, and the
/// number of discrepancy steps per symbol pair.
#[derive(Debug, Clone)]
pub struct CoupledSample {
    pub graph: ColoredGraph,
    pub allocation: AllocationOutcome,
    /// `discrepancies[b * m + a] = Bⁿ(b, a)`; mirrored for `a ≠ b`.
    pub discrepancies: Vec<u64>,
}

impl CoupledSample {
    /// Total number of steps whose drawn vertices did not become the edge.
    pub fn discrepancy_steps(&self) -> u64 {
        let m = self.graph.alphabet.len();
        (0..m)
            .flat_map(|b| (b..m).map(move |a| (b, a)))
            .map(|(b, a)| self.discrepancies[b * m + a])
            .sum()
    }

    pub fn distance(&self) -> f64 {
        self.graph
            .neighbourhood()
            .total_variation(&self.allocation.occupancy())
            .expect("same alphabet")
    }

    /// `(2/n) Σ_{a,b} Bⁿ(b, a)` over ordered pairs, the commonly quoted coupling bound.
    ///
    /// Not a valid bound when there are discrepancies on the diagonal: one
    /// step can change the profiles of four vertices. See [`CoupledSample::distance_bound`].
    pub fn stated_bound(&self) -> f64 {
        2.0 * self.discrepancies.iter().sum::<u64>() as f64 / self.graph.n() as f64
    }

    /// `4/n` per discrepancy step: a step alters the profiles of at most the
    /// two drawn vertices and the two endpoints of the replacement edge.
    pub fn distance_bound(&self) -> f64 {
        4.0 * self.discrepancy_steps() as f64 / self.graph.n() as f64
    }
}

fn assign_symbols<R: Rng + ?Sized>(counts: &[u64], rng: &mut R) -> Vec<usize> {
    let mut symbols: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(a, &c)| std::iter::repeat_n(a, c as usize))
        .collect();
    symbols.shuffle(rng);
    symbols
}

fn classes(symbols: &[usize], m: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); m];
    for (v, &a) in symbols.iter().enumerate() {
        out[a].push(v as u32);
    }
    out
}

/// `i`-th unordered pair `(i < j)` of `0..k` in row-major order of the upper triangle.
fn triangle_pair(index: u64, k: u64) -> (u64, u64) {
    // Row i holds k-1-i pairs; rows before i hold i*k - i(i+1)/2.
    let kf = k as f64;
    let disc = (2.0 * kf - 1.0) * (2.0 * kf - 1.0) - 8.0 * index as f64;
    let mut i = (((2.0 * kf - 1.0) - disc.max(0.0).sqrt()) / 2.0).floor() as u64;
    let start = |i: u64| i * k - i * (i + 1) / 2;
    while i > 0 && start(i) > index {
        i -= 1;
    }
    while start(i + 1) <= index {
        i += 1;
    }
    let j = i + 1 + (index - start(i));
    (i, j)
}

/// Unconditioned symbolled graph.
pub fn sample_colored_graph<R: Rng + ?Sized>(params: &GraphParams, rng: &mut R) -> ColoredGraph {
    let n = params.n as usize;
    let alphabet = params.symbol_law.alphabet().clone();
    let weights = params.symbol_law.weights();
    let symbols: Vec<usize> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (a, &w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    return a;
                }
            }
            weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
        })
        .collect();
    let mut edges = BTreeSet::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = params.edge_probability(symbols[v], symbols[u]);
            if p > 0.0 && rng.random::<f64>() < p {
                edges.insert((u as u32, v as u32));
            }
        }
    }
    ColoredGraph {
        alphabet,
        symbols,
        edges,
    }
}

/// Graph conditioned on `(L¹, L²) = (ν_n, π_n)`: symbols by permuting the
/// symbol multiset, then for every unordered symbol pair exactly `m_n(b, a)`
/// edges drawn without replacement from the admissible vertex pairs.
pub fn sample_conditional_graph<R: Rng + ?Sized>(targets: &QuantizedTargets, rng: &mut R) -> Result<ColoredGraph> {
    targets.check_feasible()?;
    let m = targets.alphabet().len();
    let symbols = assign_symbols(targets.symbol_counts(), rng);
    let class = classes(&symbols, m);
    let mut edges = BTreeSet::new();
    for b in 0..m {
        for a in b..m {
            let budget = targets.edge_budget(b, a) as usize;
            if budget == 0 {
                continue;
            }
            let capacity = targets.edge_capacity(b, a);
            for slot in index::sample(rng, capacity as usize, budget) {
                let (u, v) = if a == b {
                    let (i, j) = triangle_pair(slot as u64, class[a].len() as u64);
                    (class[a][i as usize], class[a][j as usize])
                } else {
                    let k = class[a].len();
                    (class[b][slot / k], class[a][slot % k])
                };
                edges.insert((u.min(v), u.max(v)));
            }
        }
    }
    Ok(ColoredGraph {
        alphabet: targets.alphabet().clone(),
        symbols,
        edges,
    })
}

/// Random allocation: for each ordered `(b, a)`, `n π_n(b, a)` balls of symbol
/// `b`, each placed independently and uniformly in one of the symbol-`a` bins.
pub fn sample_allocation<R: Rng + ?Sized>(targets: &QuantizedTargets, rng: &mut R) -> Result<AllocationOutcome> {
    targets.check_bins()?;
    let m = targets.alphabet().len();
    let symbols = assign_symbols(targets.symbol_counts(), rng);
    let class = classes(&symbols, m);
    let mut profiles = vec![LocalProfile::zero(m); symbols.len()];
    for a in 0..m {
        for b in 0..m {
            for _ in 0..targets.ball_count(b, a) {
                let bin = class[a][rng.random_range(0..class[a].len())];
                profiles[bin as usize].increment(b);
            }
        }
    }
    Ok(AllocationOutcome {
        alphabet: targets.alphabet().clone(),
        symbols,
        profiles,
    })
}

/// The coupling of the conditioned graph with the random allocation.
///
/// Unordered symbol pairs `{a ≤ b}` are visited in canonical order. At step
/// `k = 1..m_n(b, a)` vertices `V₁ ∈ V(a)` and `V₂ ∈ V(b)` are drawn uniformly
/// and independently; `V₁` receives a symbol-`b` ball and `V₂` a symbol-`a`
/// ball. The edge `V₁V₂` is added unless `V₁ = V₂` or it already exists, in
/// which case a uniform edge among the admissible absent ones is added instead
/// and `Bⁿ(b, a)` is incremented.
pub fn sample_coupled<R: Rng + ?Sized>(targets: &QuantizedTargets, rng: &mut R) -> Result<CoupledSample> {
    targets.check_feasible()?;
    targets.check_bins()?;
    let m = targets.alphabet().len();
    let symbols = assign_symbols(targets.symbol_counts(), rng);
    let class = classes(&symbols, m);
    let mut profiles = vec![LocalProfile::zero(m); symbols.len()];
    let mut edges: HashSet<(u32, u32)> = HashSet::new();
    let mut discrepancies = vec![0u64; m * m];
    for a in 0..m {
        for b in a..m {
            let (va, vb) = (&class[a], &class[b]);
            for _ in 0..targets.edge_budget(b, a) {
                let v1 = va[rng.random_range(0..va.len())];
                let v2 = vb[rng.random_range(0..vb.len())];
                profiles[v1 as usize].increment(b);
                profiles[v2 as usize].increment(a);
                let key = (v1.min(v2), v1.max(v2));
                if v1 != v2 && edges.insert(key) {
                    continue;
                }
                discrepancies[b * m + a] += 1;
                if a != b {
                    discrepancies[a * m + b] += 1;
                }
                // Feasibility leaves at least one absent admissible edge, and
                // rejection from all admissible pairs is uniform over the absent ones.
                loop {
                    let u = va[rng.random_range(0..va.len())];
                    let w = vb[rng.random_range(0..vb.len())];
                    if u != w && edges.insert((u.min(w), u.max(w))) {
                        break;
                    }
                }
            }
        }
    }
    let alphabet = targets.alphabet().clone();
    Ok(CoupledSample {
        graph: ColoredGraph {
            alphabet: alphabet.clone(),
            symbols: symbols.clone(),
            edges: edges.into_iter().collect(),
        },
        allocation: AllocationOutcome {
            alphabet,
            symbols,
            profiles,
        },
        discrepancies,
    })
}

/// `p_[k](b, a) = 𝟙{b=a}/m + (1 − 𝟙{b=a}/m)(k − 1)/m²` for `m = m_n(b, a)`,
/// the per-step collision probability as displayed in the coupling argument.
/// Reported as a diagnostic only; it is not the exact collision probability of
/// [`sample_coupled`].
pub fn collision_prob(k: u64, same_symbol: bool, budget: u64) -> Result<f64> {
    if budget == 0 {
        return Err(Error::Domain("collision probability needs m_n ≥ 1".into()));
    }
    if k == 0 || k > budget {
        return Err(Error::Domain(format!("step {k} outside 1..={budget}")));
    }
    let m = budget as f64;
    let self_term = if same_symbol { 1.0 / m } else { 0.0 };
    Ok(self_term + (1.0 - self_term) * (k - 1) as f64 / (m * m))
}
