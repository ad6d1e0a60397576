use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use nbhd_ldp::measures::{
    entropy_against_poisson, Alphabet, DegreeMeasure, EmpiricalNeighbourhood, NeighbourhoodMeasure, PairMeasure,
    QuantizedTargets, SymbolMeasure,
};
use nbhd_ldp::rates::{lambda_root, rate_degree, rate_isolated, rate_neighbourhood, root_map};
use nbhd_ldp::rng::stream_rng;
use nbhd_ldp::samplers::{
    sample_allocation, sample_colored_graph, sample_conditional_graph, sample_coupled, AllocationOutcome, ColoredGraph,
};
use nbhd_ldp::types::{
    brute_force_type_distribution, enumerate_type_class, exact_type_probability, sandwich, stirling_corrections,
    BigRational, Sandwich, TypeClass, TypeMember,
};
use nbhd_ldp::validate::{coupling_probe, estimate_event_rate, persist, Event, ExperimentConfig, Model, TargetSpec};
use nbhd_ldp::{Execution, ExtReal};

use crate::manifest::Run;
use crate::{
    EnumerateArgs, ExactProbArgs, MeasuresArgs, ModelArg, RateArgs, RootArgs, SampleArgs, TargetArgs,
    ValidateCouplingArgs, ValidateLdpArgs,
};

fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {what} file {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed {what} file {}", path.display()))
}

impl TargetArgs {
    fn numeric_pi(&self) -> Option<Result<f64>> {
        let pi = self.pi.as_deref()?;
        let value = pi.parse::<f64>().ok()?;
        Some(match self.colors {
            Some(1) | None if self.nu.is_none() => Ok(value),
            _ => Err(anyhow!("a numeric --pi needs --colors 1 and no --nu")),
        })
    }

    /// Resolves the flags to a target specification.
    fn spec(&self) -> Result<TargetSpec> {
        if let Some(value) = self.numeric_pi() {
            if self.c.is_some() {
                bail!("give either --c or --pi, not both");
            }
            let alphabet = Alphabet::standard(1);
            return Ok(TargetSpec::Measures {
                nu: SymbolMeasure::point_mass(alphabet, 0),
                pi: PairMeasure::single(value?)?,
            });
        }
        match (&self.nu, &self.pi, self.c) {
            (Some(nu), Some(pi), None) => {
                if self.colors.is_some_and(|k| k == 0) {
                    bail!("--colors must be positive");
                }
                let nu: SymbolMeasure = read_json(nu, "symbol measure")?;
                let pi: PairMeasure = read_json(Path::new(pi), "pair measure")?;
                if self.colors.is_some_and(|k| k != nu.alphabet().len()) {
                    bail!("--colors does not match the alphabet of --nu");
                }
                Ok(TargetSpec::Measures { nu, pi })
            }
            (None, None, Some(c)) => Ok(TargetSpec::SingleColor { c }),
            _ => bail!("give targets as --c C, as --colors 1 --pi VALUE, or as --nu FILE --pi FILE"),
        }
    }

    fn single_color_c(&self) -> Option<f64> {
        match self.spec().ok()? {
            TargetSpec::SingleColor { c } => Some(c),
            TargetSpec::Measures { nu, pi } if nu.alphabet().len() == 1 => Some(pi.get(0, 0)),
            TargetSpec::Measures { .. } => None,
        }
    }
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

pub fn sample(args: SampleArgs) -> Result<()> {
    let spec = args.targets.spec()?;
    let mut rng = stream_rng(args.seed, &[args.n]);
    let mut run = Run::new("sample", &args, Some(args.seed), args.out.clone());
    if args.bernoulli {
        let graph = sample_colored_graph(&spec.graph_params(args.n)?, &mut rng);
        run.emit_json("sample.json", &graph)?;
        return run.finish();
    }
    let (targets, _) = spec.at(args.n)?;
    if args.conditional {
        run.emit_json("sample.json", &sample_conditional_graph(&targets, &mut rng)?)?;
    } else if args.allocation {
        run.emit_json("sample.json", &sample_allocation(&targets, &mut rng)?)?;
    } else {
        let s = sample_coupled(&targets, &mut rng)?;
        #[derive(Serialize)]
        #[serde(rename_all = "camelCase")]
        struct Coupled<'a> {
            graph: &'a ColoredGraph,
            allocation: &'a AllocationOutcome,
            discrepancies: Vec<(String, String, u64)>,
            discrepancy_steps: u64,
            distance: f64,
            distance_bound: f64,
            stated_bound: f64,
        }
        let alphabet = targets.alphabet();
        let m = alphabet.len();
        let out = Coupled {
            graph: &s.graph,
            allocation: &s.allocation,
            discrepancies: (0..m)
                .flat_map(|b| (0..m).map(move |a| (b, a)))
                .map(|(b, a)| {
                    (
                        alphabet.name(b).to_owned(),
                        alphabet.name(a).to_owned(),
                        s.discrepancies[b * m + a],
                    )
                })
                .collect(),
            discrepancy_steps: s.discrepancy_steps(),
            distance: s.distance(),
            distance_bound: s.distance_bound(),
            stated_bound: s.stated_bound(),
        };
        run.emit_json("sample.json", &out)?;
    }
    run.finish()
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct MeasuresOutput {
    n: u64,
    symbol_counts: Vec<u64>,
    pair_counts: Vec<u64>,
    nu: SymbolMeasure,
    pi: PairMeasure,
    neighbourhood: EmpiricalNeighbourhood,
    degree: DegreeMeasure,
    projections_agree: bool,
}

pub fn measures(args: MeasuresArgs) -> Result<()> {
    let text = fs::read_to_string(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
    let (n, symbol_counts, pair_counts, neighbourhood) = match serde_json::from_str::<ColoredGraph>(&text) {
        Ok(g) => (g.n(), g.symbol_counts(), g.pair_counts(), g.neighbourhood()),
        Err(graph_err) => match serde_json::from_str::<AllocationOutcome>(&text) {
            Ok(a) => {
                let occ = a.occupancy();
                (a.n(), occ.symbol_counts(), occ.pair_counts(), occ)
            }
            Err(_) => {
                return Err(graph_err)
                    .with_context(|| format!("{} is neither a graph nor an allocation", args.input.display()))
            }
        },
    };
    let targets = QuantizedTargets::new(
        neighbourhood.alphabet().clone(),
        n,
        symbol_counts.clone(),
        pair_counts.clone(),
    )?;
    let out = MeasuresOutput {
        n,
        projections_agree: neighbourhood.symbol_counts() == symbol_counts && neighbourhood.pair_counts() == pair_counts,
        symbol_counts,
        pair_counts,
        nu: targets.nu(),
        pi: targets.pi(),
        degree: neighbourhood.degree_measure(),
        neighbourhood,
    };
    let mut run = Run::new("measures", &args, None, args.out.clone());
    run.emit_json("measures.json", &out)?;
    run.finish()
}

#[derive(Serialize)]
struct TypeEntry {
    measure: EmpiricalNeighbourhood,
    probability_num: String,
    probability_den: String,
    entropy: ExtReal,
    #[serde(skip_serializing_if = "Option::is_none")]
    sandwich: Option<SandwichEntry>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SandwichEntry {
    theta1: Option<f64>,
    theta2: Option<f64>,
    #[serde(flatten)]
    bounds: Option<Sandwich>,
    note: Option<String>,
}

#[derive(Serialize)]
struct TypesOutput {
    n: u64,
    nu: SymbolMeasure,
    pi: PairMeasure,
    types: Vec<TypeEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_agrees: Option<bool>,
}

fn type_entry(
    measure: EmpiricalNeighbourhood,
    probability: &BigRational,
    targets: &QuantizedTargets,
    class_size: Option<usize>,
) -> Result<TypeEntry> {
    let reference = targets.poisson_reference()?;
    let entropy = entropy_against_poisson(&measure.to_measure(), &reference)?;
    let sandwich = class_size.map(|k| match stirling_corrections(&measure, targets, k) {
        Ok(terms) => {
            let member = TypeMember {
                measure: measure.clone(),
                probability: probability.clone(),
            };
            SandwichEntry {
                theta1: Some(terms.theta1),
                theta2: Some(terms.theta2),
                bounds: sandwich(&member, targets, &terms).ok(),
                note: None,
            }
        }
        Err(e) => SandwichEntry {
            theta1: None,
            theta2: None,
            bounds: None,
            note: Some(e.to_string()),
        },
    });
    Ok(TypeEntry {
        measure,
        probability_num: probability.numer().to_string(),
        probability_den: probability.denom().to_string(),
        entropy,
        sandwich,
    })
}

fn class_output(class: &TypeClass, with_sandwich: bool) -> Result<TypesOutput> {
    let t = &class.targets;
    let types = class
        .members
        .iter()
        .map(|m| {
            type_entry(
                m.measure.clone(),
                &m.probability,
                t,
                with_sandwich.then_some(class.len()),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TypesOutput {
        n: t.n(),
        nu: t.nu(),
        pi: t.pi(),
        types,
        oracle_agrees: None,
    })
}

pub fn enumerate(args: EnumerateArgs) -> Result<()> {
    let (targets, _) = args.targets.spec()?.at(args.n)?;
    let class = enumerate_type_class(&targets, args.budget)?;
    let mut run = Run::new("enumerate", &args, None, args.out.clone());
    run.emit_json("types.json", &class_output(&class, false)?)?;
    run.finish()
}

pub fn exact_prob(args: ExactProbArgs) -> Result<()> {
    let (targets, _) = args.targets.spec()?.at(args.n)?;
    let mut out = match &args.measure {
        Some(path) => {
            let mu: EmpiricalNeighbourhood = read_json(path, "empirical measure")?;
            let p = exact_type_probability(&mu, &targets)?;
            TypesOutput {
                n: targets.n(),
                nu: targets.nu(),
                pi: targets.pi(),
                types: vec![type_entry(mu, &p, &targets, None)?],
                oracle_agrees: None,
            }
        }
        None => class_output(&enumerate_type_class(&targets, args.budget)?, true)?,
    };
    if args.oracle {
        let brute = brute_force_type_distribution(&targets, args.max_allocations, Execution::Parallel)?;
        let agrees = out.types.iter().all(|t| {
            let p = brute
                .get(&t.measure)
                .map(|p| (p.numer().to_string(), p.denom().to_string()));
            match p {
                Some((num, den)) => num == t.probability_num && den == t.probability_den,
                None => t.probability_num == "0",
            }
        }) && (args.measure.is_some() || brute.len() == out.types.len());
        out.oracle_agrees = Some(agrees);
    }
    let mut run = Run::new("exact-prob", &args, None, args.out.clone());
    run.emit_json("types.json", &out)?;
    run.finish()
}

fn parse_grid(grid: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = grid.split(':').collect();
    let [a, b, step] = parts[..] else {
        bail!("--grid must look like a:b:step");
    };
    let (a, b, step): (f64, f64, f64) = (
        a.parse().context("--grid start")?,
        b.parse().context("--grid end")?,
        step.parse().context("--grid step")?,
    );
    if step.is_nan() || step <= 0.0 || b < a {
        bail!("--grid needs a ≤ b and a positive step");
    }
    let count = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| a + i as f64 * step).collect())
}

fn fmt_ext(v: Option<ExtReal>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn rate(args: RateArgs) -> Result<()> {
    let mut run = Run::new("rate", &args, None, args.out.clone());
    if args.isolated {
        let c = args.targets.c.ok_or_else(|| anyhow!("--isolated needs --c"))?;
        if let Some(grid) = &args.grid {
            let mut csv = String::from("x,eta,lambda,closed_form\n");
            for x in parse_grid(grid)? {
                let r = rate_isolated(x, c)?;
                csv.push_str(&format!(
                    "{x},{},{},{}\n",
                    r.value,
                    fmt_ext(r.lambda),
                    r.closed_form.map(|v| v.to_string()).unwrap_or_default()
                ));
            }
            run.emit("rate.csv", &csv)?;
        } else {
            let x = args.x.ok_or_else(|| anyhow!("--isolated needs --x or --grid"))?;
            run.emit_json("rate.json", &rate_isolated(x, c)?)?;
        }
        return run.finish();
    }
    #[derive(Serialize)]
    struct Value {
        value: ExtReal,
    }
    let value = if let Some(path) = &args.degree {
        let c = args.targets.c.ok_or_else(|| anyhow!("--degree needs --c"))?;
        let d: DegreeMeasure = read_json(path, "degree measure")?;
        rate_degree(&d, c)?
    } else {
        let path = args.neighbourhood.as_ref().expect("group requires one kind");
        let mu: NeighbourhoodMeasure = read_json(path, "neighbourhood measure")?;
        let TargetSpec::Measures { nu, pi } = args.targets.spec()? else {
            bail!("--neighbourhood needs --nu FILE --pi FILE or --colors 1 --pi VALUE");
        };
        rate_neighbourhood(&mu, &nu, &pi)?
    };
    run.emit_json("rate.json", &Value { value })?;
    run.finish()
}

pub fn root(args: RootArgs) -> Result<()> {
    #[derive(Serialize)]
    struct RootOutput {
        x: f64,
        c: f64,
        lambda: ExtReal,
        residual: Option<f64>,
    }
    let lambda = lambda_root(args.x, args.c)?;
    let residual = lambda.finite().map(|l| (root_map(l) - (1.0 - args.x) / args.c).abs());
    let mut run = Run::new("root", &args, None, None);
    run.emit_json(
        "root.json",
        &RootOutput {
            x: args.x,
            c: args.c,
            lambda,
            residual,
        },
    )?;
    run.finish()
}

pub fn validate_ldp(args: ValidateLdpArgs) -> Result<()> {
    let spec = args.targets.spec()?;
    let prediction = args
        .targets
        .single_color_c()
        .map(|c| rate_isolated(args.x, c))
        .transpose()?;
    let cfg = ExperimentConfig {
        model: match args.model {
            ModelArg::Conditional => Model::ConditionalGraph,
            ModelArg::Allocation => Model::Allocation,
            ModelArg::Coupled => Model::Coupled,
            ModelArg::Bernoulli => Model::BernoulliGraph,
        },
        targets: spec,
        n_grid: args.n_grid.clone(),
        samples_per_n: args.samples,
        seed: args.seed,
        event: Event::IsolatedFractionAtLeast { x: args.x },
    };
    let estimate = estimate_event_rate(&cfg, execution(args.sequential))?;
    #[derive(Serialize)]
    struct Output<'a> {
        estimate: &'a nbhd_ldp::validate::DecayEstimate,
        prediction: Option<ExtReal>,
    }
    let mut run = Run::new("validate-ldp", &args, Some(args.seed), args.out.clone());
    let out = Output {
        estimate: &estimate,
        prediction: prediction.map(|p| p.value),
    };
    if let Some(dir) = run.out_dir().map(Path::to_path_buf) {
        let paths = persist(&estimate, &cfg, &dir, "decay")?;
        run.record(paths);
    }
    run.emit_json("estimate.json", &out)?;
    run.finish()
}

pub fn validate_coupling(args: ValidateCouplingArgs) -> Result<()> {
    let spec = args.targets.spec()?;
    let report = coupling_probe(
        spec.clone(),
        args.n_grid.clone(),
        args.eps,
        args.samples,
        args.seed,
        execution(args.sequential),
    )?;
    let mut run = Run::new("validate-coupling", &args, Some(args.seed), args.out.clone());
    if let Some(dir) = run.out_dir().map(Path::to_path_buf) {
        fs::create_dir_all(&dir)?;
        let path = dir.join("coupling.csv");
        report.estimate.write_csv(&path)?;
        run.record([path]);
    }
    run.emit_json("coupling.json", &report)?;
    run.finish()
}
