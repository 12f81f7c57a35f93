use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::anyhow;
use relmrf::graph::count_graph_stats;
use relmrf::io::{read_concepts, read_pairs, write_json, write_priors};
use relmrf::priors::{default_temperature_grid, extract_features_with, train_with_history};
use relmrf::tuning::SearchSpace;
use relmrf::{
    build_partitions, calibrate_temperature, enumerate_ternary_cliques, exact_map_oracle, generate_synthetic,
    infer_partitions_parallel, lbp_map, load_external_priors, load_labels, predict_prior, prf1, prf1_pairs,
    CandidateMode, Concept, EmbeddingSet, FactorGraph, FeatureVector, LabelMap, LinearPriorModel, Metrics, Pair,
    PartitionConfig, RelationshipKind, SyntheticConfig, TernaryPotential, TrainConfig, TuneOptions, TuningReport,
    VariableSet,
};
use serde::{Deserialize, Serialize};

use crate::args::{CandidatesArg, EvalArgs, InferArgs, Mode, StatsArgs, SynthArgs, TrainPriorArgs, TuneArgs};
use crate::config::RunConfig;
use crate::Failure;

type CmdResult = Result<(), Failure>;

fn require(path: &Path) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Input(anyhow!("{}: no such file", path.display())))
    }
}

fn inputs<const N: usize>(entries: [(&'static str, Option<&PathBuf>); N]) -> Result<BTreeMap<&'static str, String>, Failure> {
    let mut out = BTreeMap::new();
    for (name, path) in entries {
        if let Some(p) = path {
            require(p)?;
            out.insert(name, p.display().to_string());
        }
    }
    Ok(out)
}

/// Writes pretty JSON to `path`, or to standard output.
fn emit<T: Serialize>(path: Option<&Path>, value: &T) -> CmdResult {
    match path {
        Some(p) => write_json(p, value).map_err(|e| Failure::Runtime(e.into())),
        None => {
            let s = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.into()))?;
            println!("{s}");
            Ok(())
        }
    }
}

fn potential(kind: RelationshipKind, theta: Option<&[f64]>) -> Result<TernaryPotential, Failure> {
    match theta {
        Some(t) => TernaryPotential::from_free(kind, t).map_err(|e| Failure::Usage(format!("--theta: {e}"))),
        None => Ok(TernaryPotential::default_for(kind)),
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::Runtime(anyhow!("worker pool: {e}")))
}

/// Candidate variables for dense or sparse mode.
fn candidates(mode: Mode, kind: RelationshipKind, n: usize, priors: &relmrf::PriorTable) -> Result<VariableSet, Failure> {
    Ok(match mode {
        Mode::Dense => VariableSet::dense(kind, n),
        Mode::Sparse | Mode::Partitioned => VariableSet::from_pairs(kind, n, priors.pairs())?,
    })
}

#[derive(Serialize)]
struct Echo<'a> {
    command: &'static str,
    #[serde(flatten)]
    run: &'a RunConfig,
    inputs: BTreeMap<&'static str, String>,
}

#[derive(Serialize)]
struct Summary {
    variables: usize,
    factors: usize,
    iterations: usize,
    converged: bool,
    violations: usize,
    /// Seconds spent decoding.
    wall_time: f64,
    log_score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    partitions: Option<usize>,
}

#[derive(Serialize)]
struct PairOut {
    left: usize,
    right: usize,
    prior_p: f64,
    label: u8,
    margin: f64,
}

#[derive(Serialize)]
struct InferReport<'a> {
    config: Echo<'a>,
    summary: Summary,
    pairs: Vec<PairOut>,
}

pub fn infer(args: &InferArgs) -> CmdResult {
    let run = RunConfig::resolve(&args.common, args.theta.clone())?;
    let inputs = inputs([
        ("concepts", Some(&args.concepts)),
        ("priors", Some(&args.priors)),
        ("embeddings", args.embeddings.as_ref()),
        ("config", args.common.config.as_ref()),
    ])?;
    if args.exact && run.mode == Mode::Partitioned {
        return Err(Failure::Usage("--exact cannot be combined with --mode partitioned".into()));
    }
    let kind = run.relationship;
    let concepts = read_concepts(&args.concepts)?;
    let n = concepts.len();
    let priors = load_external_priors(&args.priors, n, kind, args.default_prior)?;
    let potential = potential(kind, run.theta.as_deref())?;
    let vars = candidates(run.mode, kind, n, &priors)?;
    log::info!("{} concepts, {} candidate {kind} pairs, {:?} mode", n, vars.len(), run.mode);

    let (summary, pairs) = if run.mode == Mode::Partitioned {
        let external = args.embeddings.as_deref().map(|p| EmbeddingSet::load(p, n)).transpose()?;
        let embeddings = EmbeddingSet::resolve(external, &concepts);
        let config = PartitionConfig {
            k: run.k,
            workers: run.workers,
            seed: run.seed,
        };
        let start = Instant::now();
        let parts = build_partitions(&vars, &priors, &embeddings, &potential, &config)?;
        let out = infer_partitions_parallel(&parts, &run.lbp, run.workers)?;
        let wall_time = start.elapsed().as_secs_f64();
        let cliques = enumerate_ternary_cliques(&vars);
        let violations = relmrf::count_transitivity_violations(&out.labels, &cliques, kind).count;
        log::info!("{} partitions decoded in {wall_time:.3}s", parts.len());
        let summary = Summary {
            variables: vars.len(),
            factors: out.partitions.iter().map(|p| p.variables + p.ternary_factors).sum(),
            iterations: out.max_iterations(),
            converged: out.converged(),
            violations,
            wall_time,
            log_score: out.log_score,
            partitions: Some(parts.len()),
        };
        let pairs = vars
            .pairs()
            .iter()
            .enumerate()
            .map(|(v, &p)| PairOut {
                left: p.left,
                right: p.right,
                prior_p: priors.get(p).map_or(f64::NAN, |b| b.p_one()),
                label: out.labels[v],
                margin: out.margins[v],
            })
            .collect();
        (summary, pairs)
    } else {
        let graph = FactorGraph::build(&vars, &priors, &potential)?;
        let start = Instant::now();
        let out = if args.exact {
            exact_map_oracle(&graph)?
        } else {
            pool(run.workers)?.install(|| lbp_map(&graph, &run.lbp))?
        };
        let wall_time = start.elapsed().as_secs_f64();
        log::info!(
            "decoded in {wall_time:.3}s, {} iterations, converged: {}",
            out.stats.iterations,
            out.stats.converged
        );
        let summary = Summary {
            variables: graph.num_variables(),
            factors: graph.num_factors(),
            iterations: out.stats.iterations,
            converged: out.stats.converged,
            violations: out.violations.len(),
            wall_time,
            log_score: out.log_score,
            partitions: None,
        };
        let pairs = graph
            .variables()
            .iter()
            .enumerate()
            .map(|(v, var)| PairOut {
                left: var.left,
                right: var.right,
                prior_p: var.prior.p_one(),
                label: out.labels[v],
                margin: out.margins[v],
            })
            .collect();
        (summary, pairs)
    };
    if summary.violations > 0 {
        log::warn!("{} transitivity violations remain; --repair removes them", summary.violations);
    }
    let report = InferReport {
        config: Echo {
            command: "infer",
            run: &run,
            inputs,
        },
        summary,
        pairs,
    };
    emit(args.output.as_deref(), &report)
}

#[derive(Serialize)]
struct TuneReport<'a> {
    config: Echo<'a>,
    search_space: SearchSpace,
    report: TuningReport,
}

pub fn tune(args: &TuneArgs) -> CmdResult {
    let run = RunConfig::resolve(&args.common, None)?;
    let inputs = inputs([
        ("concepts", Some(&args.concepts)),
        ("priors", Some(&args.priors)),
        ("labels", Some(&args.labels)),
        ("config", args.common.config.as_ref()),
    ])?;
    if run.mode == Mode::Partitioned {
        return Err(Failure::Usage("tune supports --mode dense or sparse".into()));
    }
    let kind = run.relationship;
    let concepts = read_concepts(&args.concepts)?;
    let n = concepts.len();
    let priors = load_external_priors(&args.priors, n, kind, args.default_prior)?;
    let vars = candidates(run.mode, kind, n, &priors)?;
    let labels = load_labels(&args.labels, n, kind)?;
    let gold = labels
        .iter()
        .map(|(&p, &l)| {
            vars.get(p.left, p.right).map(|v| (v, l)).ok_or_else(|| {
                Failure::Input(anyhow!("{}: pair {p} is not a candidate pair", args.labels.display()))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let build = |p: &TernaryPotential| FactorGraph::build(&vars, &priors, p);
    let space = SearchSpace::for_graph(&build(&TernaryPotential::default_for(kind))?);
    let options = TuneOptions {
        seed: run.seed,
        workers: run.workers,
        seed_default: true,
    };
    log::info!("tuning over {} labeled pairs with budget {}", gold.len(), args.budget);
    let report = relmrf::tune(&space, &build, &gold, args.budget, &run.lbp, &options)?;
    log::info!("best validation F1 {:.4} at trial {}", report.best.f1, report.best.trial);
    let out = TuneReport {
        config: Echo {
            command: "tune",
            run: &run,
            inputs,
        },
        search_space: space,
        report,
    };
    emit(args.output.as_deref(), &out)
}

/// The part of an `infer` report that `eval` reads.
#[derive(Deserialize)]
struct Predictions {
    pairs: Vec<Predicted>,
}

#[derive(Deserialize)]
struct Predicted {
    left: usize,
    right: usize,
    label: u8,
}

fn read_predictions(path: &Path, n: usize, kind: RelationshipKind) -> Result<LabelMap, Failure> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if !is_json {
        return Ok(load_labels(path, n, kind)?);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(anyhow!("{}: {e}", path.display())))?;
    let parsed: Predictions =
        serde_json::from_str(&text).map_err(|e| Failure::Input(anyhow!("{}: {e}", path.display())))?;
    let mut out = LabelMap::new();
    for p in parsed.pairs {
        if p.left >= n || p.right >= n || p.left == p.right || p.label > 1 {
            return Err(Failure::Input(anyhow!(
                "{}: invalid prediction ({}, {}) label {}",
                path.display(),
                p.left,
                p.right,
                p.label
            )));
        }
        out.insert(Pair::new(p.left, p.right).canonical(kind), p.label);
    }
    Ok(out)
}

#[derive(Serialize)]
struct EvalReport {
    config: BTreeMap<&'static str, String>,
    pairs: usize,
    metrics: Metrics,
}

/// Scores predictions on the pairs of the gold file. Predictions for other
/// pairs are ignored; a gold pair without a prediction is an error.
pub fn eval(args: &EvalArgs) -> CmdResult {
    let mut config = inputs([
        ("concepts", Some(&args.concepts)),
        ("predictions", Some(&args.predictions)),
        ("gold", Some(&args.gold)),
    ])?;
    let kind: RelationshipKind = args.relationship.into();
    config.insert("relationship", kind.to_string());
    let n = read_concepts(&args.concepts)?.len();
    let gold = load_labels(&args.gold, n, kind)?;
    let mut predicted = read_predictions(&args.predictions, n, kind)?;
    predicted.retain(|p, _| gold.contains_key(p));
    let metrics = prf1_pairs(&predicted, &gold)?;
    log::info!("P {:.4} R {:.4} F1 {:.4}", metrics.precision, metrics.recall, metrics.f1);
    emit(
        args.output.as_deref(),
        &EvalReport {
            config,
            pairs: gold.len(),
            metrics,
        },
    )
}

pub fn synth(args: &SynthArgs) -> CmdResult {
    let kind: RelationshipKind = args.relationship.into();
    let mut config = match kind {
        RelationshipKind::Equivalence => SyntheticConfig::equivalence(args.n_concepts, args.clusters, args.noise, args.seed),
        RelationshipKind::ParentChild => SyntheticConfig::parent_child(args.n_concepts, args.clusters, args.noise, args.seed),
    };
    config.max_depth = args.max_depth;
    config.candidates = match args.candidates {
        CandidatesArg::Dense => CandidateMode::Dense,
        CandidatesArg::Sparse => CandidateMode::Sparse {
            negatives_per_concept: args.negatives,
        },
    };
    let ds = generate_synthetic(&config)?;
    ds.write_to_dir(&args.out_dir).map_err(|e| Failure::Runtime(e.into()))?;
    log::info!(
        "wrote {} concepts and {} pairs ({} positive) to {}",
        ds.concepts.len(),
        ds.pairs.len(),
        ds.gold.iter().filter(|&&g| g == 1).count(),
        args.out_dir.display()
    );
    Ok(())
}

fn examples(
    labels: &LabelMap,
    concepts: &[Concept],
    embeddings: Option<&EmbeddingSet>,
) -> Vec<(FeatureVector, u8)> {
    labels
        .iter()
        .map(|(p, &l)| (extract_features_with(&concepts[p.left], &concepts[p.right], embeddings), l))
        .collect()
}

fn score(model: &LinearPriorModel, examples: &[(FeatureVector, u8)]) -> Result<SplitMetrics, Failure> {
    let predicted: Vec<u8> = examples.iter().map(|(f, _)| predict_prior(model, f).argmax()).collect();
    let gold: Vec<u8> = examples.iter().map(|(_, l)| *l).collect();
    Ok(SplitMetrics {
        examples: examples.len(),
        positives: gold.iter().filter(|&&l| l == 1).count(),
        mean_nll: model.nll_at(examples, model.temperature) / examples.len().max(1) as f64,
        metrics: prf1(&predicted, &gold)?,
    })
}

#[derive(Serialize)]
struct SplitMetrics {
    examples: usize,
    positives: usize,
    mean_nll: f64,
    metrics: Metrics,
}

#[derive(Serialize)]
struct TrainReport {
    config: BTreeMap<&'static str, String>,
    train: TrainConfig,
    model: LinearPriorModel,
    final_loss: f64,
    training: SplitMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation: Option<SplitMetrics>,
}

pub fn train_prior(args: &TrainPriorArgs) -> CmdResult {
    let mut config = inputs([
        ("concepts", Some(&args.concepts)),
        ("labels", Some(&args.labels)),
        ("validation", args.validation.as_ref()),
        ("embeddings", args.embeddings.as_ref()),
        ("pairs", args.pairs.as_ref()),
    ])?;
    let kind: RelationshipKind = args.relationship.into();
    config.insert("relationship", kind.to_string());
    let concepts = read_concepts(&args.concepts)?;
    let n = concepts.len();
    let embeddings = args.embeddings.as_deref().map(|p| EmbeddingSet::load(p, n)).transpose()?;
    let train_set = examples(&load_labels(&args.labels, n, kind)?, &concepts, embeddings.as_ref());
    let train = TrainConfig {
        epochs: args.epochs,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let (mut model, history) = train_with_history(&train_set, &train)
        .map_err(|e| Failure::Input(anyhow!("{}: {e}", args.labels.display())))?;
    let validation = match &args.validation {
        Some(path) => {
            let set = examples(&load_labels(path, n, kind)?, &concepts, embeddings.as_ref());
            model = calibrate_temperature(&model, &set, &default_temperature_grid())
                .map_err(|e| Failure::Input(anyhow!("{}: {e}", path.display())))?;
            Some(score(&model, &set)?)
        }
        None => None,
    };
    let training = score(&model, &train_set)?;
    log::info!(
        "trained on {} pairs, temperature {}, train F1 {:.4}",
        train_set.len(),
        model.temperature,
        training.metrics.f1
    );

    if let Some(out) = &args.priors_out {
        let pairs: Vec<Pair> = match &args.pairs {
            Some(path) => {
                let mut seen = std::collections::BTreeSet::new();
                let mut pairs = Vec::new();
                for row in read_pairs(path)? {
                    let p = row.pair;
                    if p.left >= n || p.right >= n || p.left == p.right {
                        return Err(Failure::Input(anyhow!(
                            "{}:{}: invalid pair {p} for {n} concepts",
                            path.display(),
                            row.line
                        )));
                    }
                    let p = p.canonical(kind);
                    if seen.insert(p) {
                        pairs.push(p);
                    }
                }
                pairs
            }
            None => VariableSet::dense(kind, n).pairs().to_vec(),
        };
        let rows = pairs.iter().map(|p| {
            let f = extract_features_with(&concepts[p.left], &concepts[p.right], embeddings.as_ref());
            (*p, predict_prior(&model, &f).p_one())
        });
        write_priors(out, rows).map_err(|e| Failure::Runtime(e.into()))?;
        log::info!("wrote {} priors to {}", pairs.len(), out.display());
        config.insert("priors_out", out.display().to_string());
    }

    let report = TrainReport {
        config,
        train,
        model,
        final_loss: history.last().copied().unwrap_or(f64::NAN),
        training,
        validation,
    };
    emit(Some(&args.model_out), &report)
}

#[derive(Serialize)]
struct StatsReport {
    relationship: RelationshipKind,
    n_concepts: usize,
    variables: u64,
    unary_factors: u64,
    ternary_factors: u64,
    total_factors: u64,
    edges: u64,
}

pub fn stats(args: &StatsArgs) -> CmdResult {
    let kind: RelationshipKind = args.relationship.into();
    let s = count_graph_stats(args.n_concepts, kind).map_err(|e| Failure::Usage(e.to_string()))?;
    emit(
        None,
        &StatsReport {
            relationship: kind,
            n_concepts: args.n_concepts,
            variables: s.variables,
            unary_factors: s.unary_factors,
            ternary_factors: s.ternary_factors,
            total_factors: s.total_factors(),
            edges: s.edges,
        },
    )
}
