//! Potential and LBP hyperparameter search.
//!
//! Half the budget is uniform random sampling over the search space, the other
//! half Gaussian perturbation of the best configuration seen so far. The first
//! entry of the table (all three relationships absent) is pinned to 1, since
//! decoding does not depend on the table's scale.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{prf1, Metrics};
use crate::graph::FactorGraph;
use crate::inference::{lbp_map, LbpConfig};
use crate::model::{free_positions, RelationshipKind, TernaryPotential};

/// Perturbation scale as a fraction of each continuous range.
const SIGMA_FRACTION: f64 = 0.1;

/// Largest total log-penalty, per variable, that a degree-scaled space lets the
/// single-link entries impose: `ln 10`.
const DEGREE_SPAN: f64 = std::f64::consts::LN_10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub kind: RelationshipKind,
    /// Bounds for the free table entries after the first, in table order.
    pub theta_ranges: Vec<(f64, f64)>,
    pub damping_range: (f64, f64),
    pub iteration_choices: Vec<usize>,
}

impl SearchSpace {
    pub fn default_for(kind: RelationshipKind) -> Self {
        SearchSpace {
            kind,
            theta_ranges: vec![(0.01, 1.0); free_positions(kind).len() - 1],
            damping_range: (0.0, 0.95),
            iteration_choices: vec![50, 100, 200],
        }
    }

    /// A space scaled to a graph whose variables each sit in up to
    /// `cliques_per_variable` ternary factors.
    ///
    /// A table entry below 1 is paid once per clique, so the range that keeps the
    /// accumulated penalty comparable to a unary log-odds shrinks as the graph
    /// grows: entries span `[exp(-ln 10 / cliques), 1]`.
    pub fn for_degree(kind: RelationshipKind, cliques_per_variable: usize) -> Self {
        let lo = (-DEGREE_SPAN / cliques_per_variable.max(1) as f64).exp();
        SearchSpace {
            theta_ranges: vec![(lo, 1.0); free_positions(kind).len() - 1],
            ..Self::default_for(kind)
        }
    }

    /// [`for_degree`](Self::for_degree) at the largest ternary degree of `graph`.
    pub fn for_graph(graph: &FactorGraph) -> Self {
        let cliques = (0..graph.num_variables()).map(|v| graph.degree(v) - 1).max().unwrap_or(0);
        Self::for_degree(graph.kind(), cliques)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = free_positions(self.kind).len() - 1;
        if self.theta_ranges.len() != expected {
            return Err(Error::config(format!(
                "{} search space needs {expected} parameter ranges, got {}",
                self.kind,
                self.theta_ranges.len()
            )));
        }
        for (i, &(lo, hi)) in self.theta_ranges.iter().enumerate() {
            if !(lo > 0.0 && lo < hi && hi <= 1.0) {
                return Err(Error::config(format!(
                    "parameter range {i} must satisfy 0 < lower < upper <= 1, got [{lo}, {hi}]"
                )));
            }
        }
        let (lo, hi) = self.damping_range;
        if !(lo >= 0.0 && lo < hi && hi <= 0.95) {
            return Err(Error::config(format!(
                "damping range must satisfy 0 <= lower < upper <= 0.95, got [{lo}, {hi}]"
            )));
        }
        if self.iteration_choices.is_empty() || self.iteration_choices.contains(&0) {
            return Err(Error::config("iteration choices must be non-empty and positive"));
        }
        Ok(())
    }

    pub fn contains(&self, config: &TrialConfig) -> bool {
        config.theta.len() == self.theta_ranges.len() + 1
            && config.theta[0] == 1.0
            && config.theta[1..]
                .iter()
                .zip(&self.theta_ranges)
                .all(|(&v, &(lo, hi))| (lo..=hi).contains(&v))
            && (self.damping_range.0..=self.damping_range.1).contains(&config.damping)
            && self.iteration_choices.contains(&config.max_iterations)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> TrialConfig {
        let mut theta = vec![1.0];
        theta.extend(self.theta_ranges.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)));
        let (dlo, dhi) = self.damping_range;
        TrialConfig {
            theta,
            damping: rng.random_range(dlo..=dhi),
            max_iterations: self.iteration_choices[rng.random_range(0..self.iteration_choices.len())],
        }
    }

    fn perturb<R: Rng>(&self, around: &TrialConfig, rng: &mut R) -> TrialConfig {
        let mut gauss = |x: f64, lo: f64, hi: f64| {
            let n = Normal::new(x, SIGMA_FRACTION * (hi - lo)).expect("positive sigma");
            n.sample(rng).clamp(lo, hi)
        };
        let mut theta = vec![1.0];
        for (&v, &(lo, hi)) in around.theta[1..].iter().zip(&self.theta_ranges) {
            theta.push(gauss(v, lo, hi));
        }
        let damping = gauss(around.damping, self.damping_range.0, self.damping_range.1);
        let choices = &self.iteration_choices;
        let at = choices.iter().position(|&c| c == around.max_iterations).unwrap_or(0) as f64;
        let sigma = (SIGMA_FRACTION * choices.len() as f64).max(0.5);
        let idx = Normal::new(at, sigma)
            .expect("positive sigma")
            .sample(rng)
            .round()
            .clamp(0.0, (choices.len() - 1) as f64) as usize;
        TrialConfig {
            theta,
            damping,
            max_iterations: choices[idx],
        }
    }

    /// The default potential and `base` LBP settings, clipped into the space.
    pub fn default_config(&self, base: &LbpConfig) -> TrialConfig {
        let d = TernaryPotential::default_for(self.kind).free_params();
        let mut theta = vec![1.0];
        theta.extend(d[1..].iter().zip(&self.theta_ranges).map(|(&v, &(lo, hi))| v.clamp(lo, hi)));
        let max_iterations = *self
            .iteration_choices
            .iter()
            .min_by_key(|&&c| (c.abs_diff(base.max_iterations), c))
            .expect("non-empty choices");
        TrialConfig {
            theta,
            damping: base.damping.clamp(self.damping_range.0, self.damping_range.1),
            max_iterations,
        }
    }
}

/// One point in the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    /// All free table entries in table order; the first is always 1.
    pub theta: Vec<f64>,
    pub damping: f64,
    pub max_iterations: usize,
}

impl TrialConfig {
    pub fn potential(&self, kind: RelationshipKind) -> Result<TernaryPotential> {
        TernaryPotential::from_free(kind, &self.theta)
    }

    /// `base` with this trial's damping and iteration cap.
    pub fn lbp(&self, base: &LbpConfig) -> LbpConfig {
        LbpConfig {
            damping: self.damping,
            max_iterations: self.max_iterations,
            ..*base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub config: TrialConfig,
    pub f1: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub seed: u64,
    pub workers: usize,
    /// Use the default configuration as trial 0.
    pub seed_default: bool,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            seed: 0,
            workers: 1,
            seed_default: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningReport {
    pub kind: RelationshipKind,
    pub budget: usize,
    pub seed: u64,
    pub history: Vec<TrialRecord>,
    pub best: TrialRecord,
}

impl TuningReport {
    /// Best objective after each trial.
    pub fn incumbent_curve(&self) -> Vec<f64> {
        self.history
            .iter()
            .scan(f64::NEG_INFINITY, |best, r| {
                *best = best.max(r.f1);
                Some(*best)
            })
            .collect()
    }
}

/// Builds the graph for one configuration's potential, decodes it and scores the
/// labels of the `gold` variables.
pub fn evaluate_config<B>(
    kind: RelationshipKind,
    config: &TrialConfig,
    build: &B,
    gold: &[(usize, u8)],
    base: &LbpConfig,
) -> Result<Metrics>
where
    B: Fn(&TernaryPotential) -> Result<FactorGraph> + ?Sized,
{
    let graph = build(&config.potential(kind)?)?;
    let assignment = lbp_map(&graph, &config.lbp(base))?;
    let mut predicted = Vec::with_capacity(gold.len());
    for &(v, _) in gold {
        predicted.push(*assignment.labels.get(v).ok_or_else(|| {
            Error::Coverage(format!("gold variable {v} is not in the graph"))
        })?);
    }
    let truth: Vec<u8> = gold.iter().map(|&(_, l)| l).collect();
    prf1(&predicted, &truth)
}

/// Searches `space` for the configuration with the highest F1 on `gold`.
///
/// Exploration trials are drawn up front and may run in parallel; exploitation
/// trials run one after another. History is ordered by trial index and depends
/// only on the inputs and `options.seed`. Ties keep the earliest trial.
pub fn tune<B>(
    space: &SearchSpace,
    build: &B,
    gold: &[(usize, u8)],
    budget: usize,
    base: &LbpConfig,
    options: &TuneOptions,
) -> Result<TuningReport>
where
    B: Fn(&TernaryPotential) -> Result<FactorGraph> + Sync + ?Sized,
{
    space.validate()?;
    base.validate()?;
    if budget == 0 {
        return Err(Error::config("tuning budget must be at least 1"));
    }
    if gold.is_empty() {
        return Err(Error::config("no validation labels"));
    }
    if !gold.iter().any(|&(_, l)| l == 1) {
        return Err(Error::config("validation labels contain no positive pair"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::WorkerPool(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let run = |trial: usize, config: TrialConfig| -> Result<TrialRecord> {
        let start = Instant::now();
        let m = evaluate_config(space.kind, &config, build, gold, base)?;
        let record = TrialRecord {
            trial,
            config,
            f1: m.f1,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::debug!("trial {trial}: f1 {:.4}", record.f1);
        Ok(record)
    };

    let explore = budget.div_ceil(2);
    let configs: Vec<TrialConfig> = (0..explore)
        .map(|t| {
            if t == 0 && options.seed_default {
                space.default_config(base)
            } else {
                space.sample(&mut rng)
            }
        })
        .collect();
    let mut history: Vec<TrialRecord> = pool.install(|| {
        configs
            .into_par_iter()
            .enumerate()
            .map(|(t, c)| run(t, c))
            .collect::<Result<_>>()
    })?;

    let best_of = |h: &[TrialRecord]| -> usize {
        let mut best = 0;
        for (i, r) in h.iter().enumerate() {
            if r.f1 > h[best].f1 {
                best = i;
            }
        }
        best
    };
    let mut best = best_of(&history);
    for t in explore..budget {
        let config = space.perturb(&history[best].config, &mut rng);
        let record = pool.install(|| run(t, config))?;
        if record.f1 > history[best].f1 {
            best = t;
        }
        history.push(record);
    }
    log::info!("best trial {best}: f1 {:.4}", history[best].f1);
    Ok(TuningReport {
        kind: space.kind,
        budget,
        seed: options.seed,
        best: history[best].clone(),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Pair, VariableSet};
    use crate::priors::PriorTable;

    const EQ: RelationshipKind = RelationshipKind::Equivalence;

    fn conflict_builder(p: &TernaryPotential) -> Result<FactorGraph> {
        let vars = VariableSet::dense(EQ, 3);
        let mut priors = PriorTable::strict(EQ);
        for (pair, v) in [(Pair::new(0, 1), 0.6), (Pair::new(1, 2), 0.6), (Pair::new(0, 2), 0.1)] {
            priors.insert(pair, crate::model::PriorBelief::new(v)?)?;
        }
        FactorGraph::build(&vars, &priors, p)
    }

    #[test]
    fn degree_scaled_ranges() {
        let one = SearchSpace::for_degree(EQ, 1);
        assert!((one.theta_ranges[0].0 - 0.1).abs() < 1e-12);
        let big = SearchSpace::for_degree(EQ, 58);
        assert!((big.theta_ranges[3].0.ln() * 58.0 + std::f64::consts::LN_10).abs() < 1e-9);
        big.validate().unwrap();
        let g = conflict_builder(&TernaryPotential::default_for(EQ)).unwrap();
        assert_eq!(SearchSpace::for_graph(&g), one);
    }

    #[test]
    fn default_space_shapes() {
        assert_eq!(SearchSpace::default_for(EQ).theta_ranges.len(), 4);
        assert_eq!(SearchSpace::default_for(RelationshipKind::ParentChild).theta_ranges.len(), 6);
        let mut s = SearchSpace::default_for(EQ);
        s.iteration_choices.clear();
        assert!(s.validate().is_err());
    }

    #[test]
    fn budget_one_returns_single_trial() {
        let gold = [(0, 1), (1, 1), (2, 1)];
        let r = tune(&SearchSpace::default_for(EQ), &conflict_builder, &gold, 1, &LbpConfig::default(), &TuneOptions::default()).unwrap();
        assert_eq!(r.history.len(), 1);
        assert_eq!(r.best, r.history[0]);
    }

    #[test]
    fn default_theta_scores_the_decoded_labels() {
        // default table on priors (0.6, 0.6, 0.1): all-absent scores 0.144 and
        // beats every labeling with a link, so nothing is predicted
        let space = SearchSpace::default_for(EQ);
        let c = space.default_config(&LbpConfig::default());
        let m = evaluate_config(EQ, &c, &conflict_builder, &[(0, 1), (1, 1), (2, 1)], &LbpConfig::default()).unwrap();
        assert_eq!((m.tp, m.fn_, m.f1), (0, 3, 0.0));
        let m = evaluate_config(EQ, &c, &conflict_builder, &[(0, 0), (1, 0), (2, 1)], &LbpConfig::default()).unwrap();
        assert_eq!(m.fn_, 1);
    }

    #[test]
    fn constant_objective_keeps_first() {
        // gold ignores every variable the potential could change
        let build = |p: &TernaryPotential| {
            let vars = VariableSet::dense(EQ, 2);
            FactorGraph::build(&vars, &PriorTable::with_default(EQ, 0.9), p)
        };
        let r = tune(&SearchSpace::default_for(EQ), &build, &[(0, 1)], 7, &LbpConfig::default(), &TuneOptions::default()).unwrap();
        assert_eq!(r.history.len(), 7);
        assert_eq!(r.best.trial, 0);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let s = SearchSpace::default_for(EQ);
        let base = LbpConfig::default();
        let o = TuneOptions::default();
        assert!(tune(&s, &conflict_builder, &[(0, 0)], 3, &base, &o).is_err());
        assert!(tune(&s, &conflict_builder, &[], 3, &base, &o).is_err());
        assert!(tune(&s, &conflict_builder, &[(0, 1)], 0, &base, &o).is_err());
    }

    #[test]
    fn history_stays_in_space_and_is_reproducible() {
        let s = SearchSpace::default_for(EQ);
        let gold = [(0, 1), (1, 1), (2, 0)];
        let o = TuneOptions { seed: 9, workers: 3, seed_default: false };
        let a = tune(&s, &conflict_builder, &gold, 12, &LbpConfig::default(), &o).unwrap();
        let b = tune(&s, &conflict_builder, &gold, 12, &LbpConfig::default(), &TuneOptions { workers: 1, ..o }).unwrap();
        assert!(a.history.iter().all(|r| s.contains(&r.config)));
        let strip = |r: &TuningReport| r.history.iter().map(|t| (t.config.clone(), t.f1)).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        let curve = a.incumbent_curve();
        assert!(curve.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*curve.last().unwrap(), a.best.f1);
    }
}
