//! Monte Carlo decay-rate estimation.
//!
//! Samples are drawn in fixed-size chunks; chunk `j` at size `n` uses the RNG
//! stream keyed by `(seed, n, j)`, so estimates do not depend on the number of
//! worker threads.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::measures::{DegreeMeasure, PairMeasure, ProfileKey, QuantizedTargets, SymbolMeasure};
use crate::rng::stream_rng;
use crate::samplers::{sample_allocation, sample_colored_graph, sample_conditional_graph, sample_coupled, GraphParams};

/// Samples per RNG stream.
pub const CHUNK: u64 = 4096;
/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    ConditionalGraph,
    Allocation,
    Coupled,
    BernoulliGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Event {
    Always,
    /// Proportion of isolated vertices (empty bins for the allocation) is at least `x`.
    IsolatedFractionAtLeast {
        x: f64,
    },
    /// Empirical degree measure within total-variation distance `radius` of `target`.
    DegreeWithinTv {
        target: DegreeMeasure,
        radius: f64,
    },
    /// Coupling distance `d(M_Y, M_Ỹ) ≥ eps`; requires the coupled model.
    CouplingDistanceAtLeast {
        eps: f64,
    },
}

/// How targets are produced at each `n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TargetSpec {
    /// One color, `m_n = round(n c / 2)` edges.
    SingleColor { c: f64 },
    /// Largest-remainder quantization of `(ν, π)`.
    Measures { nu: SymbolMeasure, pi: PairMeasure },
}

impl TargetSpec {
    /// Quantized targets at `n` and the mean degree they realise.
    pub fn at(&self, n: u64) -> Result<(QuantizedTargets, f64)> {
        let targets = match self {
            TargetSpec::SingleColor { c } => {
                if !(c.is_finite() && *c >= 0.0) {
                    return Err(Error::Domain(format!("mean degree must be non-negative, got {c}")));
                }
                QuantizedTargets::single_color(n, (n as f64 * c / 2.0).round() as u64)?
            }
            TargetSpec::Measures { nu, pi } => QuantizedTargets::quantize(nu, pi, n)?,
        };
        let effective_c = targets.total_balls() as f64 / n as f64;
        Ok((targets, effective_c))
    }

    /// Parameters of the unconditioned graph with the same mean intensities.
    pub fn graph_params(&self, n: u64) -> Result<GraphParams> {
        match self {
            TargetSpec::SingleColor { c } => GraphParams::single_color(n, *c),
            TargetSpec::Measures { nu, pi } => {
                let m = nu.alphabet().len();
                let mut kernel = vec![0.0; m * m];
                for b in 0..m {
                    for a in 0..m {
                        let p = pi.get(b, a);
                        if p == 0.0 {
                            continue;
                        }
                        let denom = nu.get(a) * nu.get(b);
                        if denom == 0.0 {
                            return Err(Error::EmptySymbolClass {
                                symbol: nu.alphabet().name(if nu.get(a) == 0.0 { a } else { b }).to_string(),
                                balls: 0,
                            });
                        }
                        kernel[b * m + a] = p / denom;
                    }
                }
                GraphParams::new(n, nu.clone(), kernel)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentConfig {
    pub model: Model,
    pub targets: TargetSpec,
    pub n_grid: Vec<u64>,
    pub samples_per_n: u64,
    pub seed: u64,
    pub event: Event,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid[0] == 0 {
            return Err(Error::Domain("nGrid must be non-empty with positive sizes".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("nGrid must be strictly increasing".into()));
        }
        if self.samples_per_n == 0 {
            return Err(Error::Domain("samplesPerN must be at least 1".into()));
        }
        if matches!(self.event, Event::CouplingDistanceAtLeast { .. }) && self.model != Model::Coupled {
            return Err(Error::Domain("coupling-distance events need the coupled model".into()));
        }
        Ok(())
    }

    /// SHA-256 of `blob <len>\0<canonical JSON>`.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(format!("blob {}\0", json.len()).as_bytes());
        hasher.update(json.as_bytes());
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Wilson score interval for `hits` successes out of `total`.
pub fn wilson_interval(hits: u64, total: u64, z: f64) -> (f64, f64) {
    let nf = total as f64;
    let p = hits as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PointEstimate {
    pub n: u64,
    pub effective_c: f64,
    pub hit_count: u64,
    pub total: u64,
    pub p_hat: f64,
    /// `−(1/n) log p̂`; `None` when censored.
    pub minus_log_p_over_n: Option<f64>,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// Zero hits: only `rate ≥ rate_lower` is known.
    pub censored: bool,
    /// `−(1/n) log(wilson_high)`.
    pub rate_lower: f64,
    /// `−(1/n) log(wilson_low)`; `None` when the lower end is 0.
    pub rate_upper: Option<f64>,
}

impl PointEstimate {
    fn new(n: u64, effective_c: f64, hits: u64, total: u64) -> Self {
        let p_hat = hits as f64 / total as f64;
        let (lo, hi) = wilson_interval(hits, total, Z95);
        let nf = n as f64;
        let rate = |p: f64| if p > 0.0 { Some(-p.ln() / nf) } else { None };
        PointEstimate {
            n,
            effective_c,
            hit_count: hits,
            total,
            p_hat,
            minus_log_p_over_n: rate(p_hat),
            wilson_low: lo,
            wilson_high: hi,
            censored: hits == 0,
            rate_lower: rate(hi).unwrap_or(f64::INFINITY),
            rate_upper: rate(lo),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DecaySummary {
    /// Intercept of the least-squares fit of `−(1/n) log p̂` against `1/n`.
    pub extrapolated_rate: Option<f64>,
    pub std_error: Option<f64>,
    pub points_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DecayEstimate {
    pub points: Vec<PointEstimate>,
    pub summary: DecaySummary,
}

impl DecayEstimate {
    fn from_points(points: Vec<PointEstimate>) -> Self {
        let summary = regress(&points);
        DecayEstimate { points, summary }
    }

    pub fn point(&self, n: u64) -> Option<&PointEstimate> {
        self.points.iter().find(|p| p.n == n)
    }

    /// Finite rates increase with `n`, and once a size is censored all larger ones are.
    pub fn rates_increasing_or_censored(&self) -> bool {
        let mut last = f64::NEG_INFINITY;
        let mut seen_censored = false;
        for p in &self.points {
            match p.minus_log_p_over_n {
                Some(r) if !seen_censored && r > last => last = r,
                None => seen_censored = true,
                _ => return false,
            }
        }
        true
    }

    /// CSV with one row per `n`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)?;
        writer.write_record([
            "n",
            "effective_c",
            "hits",
            "total",
            "p_hat",
            "minus_log_p_over_n",
            "wilson_low",
            "wilson_high",
            "censored",
            "rate_lower",
        ])?;
        for p in &self.points {
            writer.write_record([
                p.n.to_string(),
                p.effective_c.to_string(),
                p.hit_count.to_string(),
                p.total.to_string(),
                p.p_hat.to_string(),
                p.minus_log_p_over_n.map(|r| r.to_string()).unwrap_or_default(),
                p.wilson_low.to_string(),
                p.wilson_high.to_string(),
                p.censored.to_string(),
                p.rate_lower.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn regress(points: &[PointEstimate]) -> DecaySummary {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.minus_log_p_over_n.map(|r| (1.0 / p.n as f64, r)))
        .collect();
    let k = data.len();
    let none = DecaySummary {
        extrapolated_rate: None,
        std_error: None,
        points_used: k,
    };
    match k {
        0 => none,
        1 => DecaySummary {
            extrapolated_rate: Some(data[0].1),
            ..none
        },
        _ => {
            let kf = k as f64;
            let mx = data.iter().map(|d| d.0).sum::<f64>() / kf;
            let my = data.iter().map(|d| d.1).sum::<f64>() / kf;
            let sxx: f64 = data.iter().map(|d| (d.0 - mx).powi(2)).sum();
            let sxy: f64 = data.iter().map(|d| (d.0 - mx) * (d.1 - my)).sum();
            let slope = sxy / sxx;
            let intercept = my - slope * mx;
            let std_error = (k > 2).then(|| {
                let rss: f64 = data.iter().map(|d| (d.1 - intercept - slope * d.0).powi(2)).sum();
                let s2 = rss / (kf - 2.0);
                (s2 * (1.0 / kf + mx * mx / sxx)).sqrt()
            });
            DecaySummary {
                extrapolated_rate: Some(intercept),
                std_error,
                points_used: k,
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
struct ChunkStats {
    hits: u64,
    /// Per ordered pair `(b, a)`: sums of `Bⁿ(b, a)` and of its square.
    disc_sum: Vec<u64>,
    disc_sq_sum: Vec<u64>,
    stated_bound_violations: u64,
}

impl ChunkStats {
    fn merge(&mut self, other: ChunkStats) {
        self.hits += other.hits;
        self.stated_bound_violations += other.stated_bound_violations;
        if self.disc_sum.is_empty() {
            self.disc_sum = other.disc_sum;
            self.disc_sq_sum = other.disc_sq_sum;
        } else {
            for (x, y) in self.disc_sum.iter_mut().zip(other.disc_sum) {
                *x += y;
            }
            for (x, y) in self.disc_sq_sum.iter_mut().zip(other.disc_sq_sum) {
                *x += y;
            }
        }
    }
}

fn isolated_hit(isolated: u64, n: u64, x: f64) -> bool {
    isolated as f64 >= x * n as f64 - 1e-9
}

fn degree_hit(counts: &[u64], n: u64, target: &DegreeMeasure, radius: f64) -> bool {
    let len = counts.len().max(target.weights().len());
    let tv: f64 = (0..len)
        .map(|k| (counts.get(k).copied().unwrap_or(0) as f64 / n as f64 - target.get(k)).abs())
        .sum::<f64>()
        * 0.5;
    tv <= radius
}

fn run_chunk(
    cfg: &ExperimentConfig,
    targets: &QuantizedTargets,
    params: Option<&GraphParams>,
    n: u64,
    chunk: u64,
) -> Result<ChunkStats> {
    let mut rng = stream_rng(cfg.seed, &[n, chunk]);
    let start = chunk * CHUNK;
    let count = CHUNK.min(cfg.samples_per_n - start);
    let m = targets.alphabet().len();
    let mut stats = ChunkStats {
        disc_sum: vec![0; m * m],
        disc_sq_sum: vec![0; m * m],
        ..ChunkStats::default()
    };
    for _ in 0..count {
        let hit = match cfg.model {
            Model::ConditionalGraph | Model::BernoulliGraph => {
                let graph = match params {
                    Some(p) => sample_colored_graph(p, &mut rng),
                    None => sample_conditional_graph(targets, &mut rng)?,
                };
                match &cfg.event {
                    Event::Always => true,
                    Event::IsolatedFractionAtLeast { x } => isolated_hit(graph.isolated_count(), n, *x),
                    Event::DegreeWithinTv { target, radius } => {
                        degree_hit(&graph.neighbourhood().degree_counts(), n, target, *radius)
                    }
                    Event::CouplingDistanceAtLeast { .. } => unreachable!("rejected by validate"),
                }
            }
            Model::Allocation => {
                let alloc = sample_allocation(targets, &mut rng)?;
                match &cfg.event {
                    Event::Always => true,
                    Event::IsolatedFractionAtLeast { x } => isolated_hit(alloc.empty_bins(), n, *x),
                    Event::DegreeWithinTv { target, radius } => {
                        degree_hit(&alloc.occupancy().degree_counts(), n, target, *radius)
                    }
                    Event::CouplingDistanceAtLeast { .. } => unreachable!("rejected by validate"),
                }
            }
            Model::Coupled => {
                let sample = sample_coupled(targets, &mut rng)?;
                for (i, &d) in sample.discrepancies.iter().enumerate() {
                    stats.disc_sum[i] += d;
                    stats.disc_sq_sum[i] += d * d;
                }
                let distance = sample.distance();
                if distance > sample.stated_bound() + 1e-12 {
                    stats.stated_bound_violations += 1;
                }
                match &cfg.event {
                    Event::Always => true,
                    Event::IsolatedFractionAtLeast { x } => isolated_hit(sample.graph.isolated_count(), n, *x),
                    Event::DegreeWithinTv { target, radius } => {
                        degree_hit(&sample.graph.neighbourhood().degree_counts(), n, target, *radius)
                    }
                    Event::CouplingDistanceAtLeast { eps } => distance >= *eps,
                }
            }
        };
        stats.hits += hit as u64;
    }
    Ok(stats)
}

fn run_size(cfg: &ExperimentConfig, n: u64, exec: Execution) -> Result<(f64, ChunkStats)> {
    let (targets, effective_c) = cfg.targets.at(n)?;
    let params = match cfg.model {
        Model::BernoulliGraph => Some(cfg.targets.graph_params(n)?),
        Model::ConditionalGraph | Model::Coupled => {
            targets.check_feasible()?;
            None
        }
        Model::Allocation => None,
    };
    if cfg.model != Model::ConditionalGraph && cfg.model != Model::BernoulliGraph {
        targets.check_bins()?;
    }
    let chunks = cfg.samples_per_n.div_ceil(CHUNK);
    let parts = exec.map(chunks as usize, |j| {
        run_chunk(cfg, &targets, params.as_ref(), n, j as u64)
    });
    let mut total = ChunkStats::default();
    for part in parts {
        total.merge(part?);
    }
    Ok((effective_c, total))
}

/// Event frequency and `−(1/n) log p̂` at every `n` of the grid.
pub fn estimate_event_rate(cfg: &ExperimentConfig, exec: Execution) -> Result<DecayEstimate> {
    cfg.validate()?;
    let mut points = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        let (effective_c, stats) = run_size(cfg, n, exec)?;
        points.push(PointEstimate::new(n, effective_c, stats.hits, cfg.samples_per_n));
    }
    Ok(DecayEstimate::from_points(points))
}

/// Sample mean and standard deviation of `Bⁿ(b, a)` at one size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiscrepancyStats {
    pub n: u64,
    /// Row-major `[b * m + a]`.
    pub mean: Vec<f64>,
    pub std_dev: Vec<f64>,
    /// Samples where `d(M_Y, M_Ỹ)` exceeded `(2/n) Σ Bⁿ`.
    pub stated_bound_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CouplingReport {
    pub eps: f64,
    pub estimate: DecayEstimate,
    pub discrepancies: Vec<DiscrepancyStats>,
    /// `α = −(1/n₀) log p̂(n₀)` at the smallest size.
    pub fitted_alpha: Option<f64>,
    /// `p̂(n_max) < e^{−α n_max}`; `None` when the smallest size is censored.
    pub superexponential: Option<bool>,
}

/// Frequency of `{d(M_Y, M_Ỹ) ≥ ε}` under the coupling, with discrepancy statistics.
pub fn coupling_probe(
    targets: TargetSpec,
    n_grid: Vec<u64>,
    eps: f64,
    samples: u64,
    seed: u64,
    exec: Execution,
) -> Result<CouplingReport> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Domain(format!("ε must be positive, got {eps}")));
    }
    let cfg = ExperimentConfig {
        model: Model::Coupled,
        targets,
        n_grid,
        samples_per_n: samples,
        seed,
        event: Event::CouplingDistanceAtLeast { eps },
    };
    cfg.validate()?;
    let mut points = Vec::new();
    let mut discrepancies = Vec::new();
    for &n in &cfg.n_grid {
        let (effective_c, stats) = run_size(&cfg, n, exec)?;
        points.push(PointEstimate::new(n, effective_c, stats.hits, samples));
        let s = samples as f64;
        let mean: Vec<f64> = stats.disc_sum.iter().map(|&x| x as f64 / s).collect();
        let std_dev = stats
            .disc_sq_sum
            .iter()
            .zip(&mean)
            .map(|(&q, &mu)| {
                if samples < 2 {
                    0.0
                } else {
                    ((q as f64 - s * mu * mu) / (s - 1.0)).max(0.0).sqrt()
                }
            })
            .collect();
        discrepancies.push(DiscrepancyStats {
            n,
            mean,
            std_dev,
            stated_bound_violations: stats.stated_bound_violations,
        });
    }
    let estimate = DecayEstimate::from_points(points);
    let first = &estimate.points[0];
    let last = estimate.points.last().expect("non-empty grid");
    let fitted_alpha = first.minus_log_p_over_n;
    let superexponential = fitted_alpha.map(|alpha| last.p_hat < (-alpha * last.n as f64).exp());
    Ok(CouplingReport {
        eps,
        estimate,
        discrepancies,
        fitted_alpha,
        superexponential,
    })
}

/// Total variation between the mean neighbourhood measure of the conditioned
/// graph and `Poi_n`.
pub fn lln_probe(targets: &TargetSpec, n: u64, samples: u64, seed: u64, exec: Execution) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Domain("samples must be at least 1".into()));
    }
    let (quantized, _) = targets.at(n)?;
    quantized.check_feasible()?;
    let chunks = samples.div_ceil(CHUNK);
    let parts = exec.map(chunks as usize, |j| -> Result<BTreeMap<ProfileKey, u64>> {
        let mut rng = stream_rng(seed, &[n, j as u64, u64::MAX]);
        let count = CHUNK.min(samples - j as u64 * CHUNK);
        let mut acc = BTreeMap::new();
        for _ in 0..count {
            let graph = sample_conditional_graph(&quantized, &mut rng)?;
            for (key, &c) in graph.neighbourhood().counts() {
                *acc.entry(key.clone()).or_insert(0) += c;
            }
        }
        Ok(acc)
    });
    let mut total: BTreeMap<ProfileKey, u64> = BTreeMap::new();
    for part in parts {
        for (key, c) in part? {
            *total.entry(key).or_insert(0) += c;
        }
    }
    let reference = quantized.poisson_reference()?;
    let max_degree = total.keys().map(|(_, l)| l.degree()).max().unwrap_or(0).max(20) as u32 + 20;
    let poi = reference.truncated(max_degree);
    let scale = (n * samples) as f64;
    let mut sum = 0.0;
    let mut covered = 0.0;
    for (key, &q) in &poi {
        covered += q;
        sum += (total.get(key).copied().unwrap_or(0) as f64 / scale - q).abs();
    }
    for (key, &c) in &total {
        if !poi.contains_key(key) {
            sum += c as f64 / scale;
        }
    }
    sum += (1.0 - covered).max(0.0);
    Ok(0.5 * sum)
}

/// Record of one validation run written next to its CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidationManifest {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub content_hash: String,
    pub outputs: Vec<PathBuf>,
}

/// Writes `<stem>.csv` and then `<stem>.json` into `dir`; returns both paths.
pub fn persist(estimate: &DecayEstimate, cfg: &ExperimentConfig, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    estimate.write_csv(&csv_path)?;
    let json_path = dir.join(format!("{stem}.json"));
    let manifest = ValidationManifest {
        config: cfg.clone(),
        seed: cfg.seed,
        content_hash: cfg.content_hash(),
        outputs: vec![csv_path.clone()],
    };
    let mut file = fs::File::create(&json_path)?;
    serde_json::to_writer_pretty(&mut file, &manifest)?;
    file.write_all(b"\n")?;
    Ok(vec![csv_path, json_path])
}
