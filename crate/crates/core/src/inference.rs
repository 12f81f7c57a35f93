//! MAP decoding.
//!
//! [`lbp_map`] runs max-product loopy belief propagation in the log domain
//! (max-sum). A round is synchronous: every variable-to-factor message is computed
//! from the previous round's factor-to-variable messages, then every
//! factor-to-variable message from the fresh variable-to-factor messages. Ternary
//! factor-to-variable messages are damped; unary messages are constant and are not.
//!
//! Every message is shifted so that its larger component is 0. Components at the
//! [`NEG_INF`] sentinel mark states a zero potential rules out.
//!
//! [`exact_map_oracle`] enumerates all assignments and is the reference the
//! approximate decoder is tested against.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::FactorGraph;
use crate::model::{
    config_index, is_impossible, log_add, snap, AssignmentGraph, InferenceStats, NEG_INF,
};

/// Graphs with at least this many edges update messages on the rayon pool.
const PARALLEL_MIN_EDGES: usize = 1 << 14;

/// Hard cap for exhaustive enumeration.
pub const ORACLE_MAX_VARIABLES: usize = 25;

pub type LogMessage = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbpConfig {
    pub max_iterations: usize,
    /// Weight of the previous message in a damped update, in `[0, 1)`.
    pub damping: f64,
    /// Convergence threshold on the largest absolute message change; 0 runs
    /// every iteration.
    pub tolerance: f64,
    pub seed: u64,
    /// Greedily repair transitivity violations after decoding.
    #[serde(default)]
    pub repair: bool,
}

impl Default for LbpConfig {
    fn default() -> Self {
        LbpConfig {
            max_iterations: 200,
            damping: 0.5,
            tolerance: 1e-6,
            seed: 0,
            repair: false,
        }
    }
}

impl LbpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be positive"));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::config(format!("damping must be in [0, 1), got {}", self.damping)));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::config(format!("tolerance must be >= 0, got {}", self.tolerance)));
        }
        Ok(())
    }
}

/// Shifts a log message so its maximum is 0; an all-impossible message becomes uniform.
#[inline]
pub fn normalize(m: LogMessage) -> LogMessage {
    let max = m[0].max(m[1]);
    if is_impossible(max) {
        return [0.0, 0.0];
    }
    [snap(m[0] - max), snap(m[1] - max)]
}

/// Messages on every variable-factor edge, in both directions.
///
/// Variable-to-factor messages are stored per CSR position of the graph's
/// adjacency. Factor-to-variable messages are stored per unary factor and per
/// ternary slot (`3 * t + slot`), so each sweep writes one contiguous buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageStore {
    var_to_factor: Vec<LogMessage>,
    unary_to_var: Vec<LogMessage>,
    ternary_to_var: Vec<LogMessage>,
}

impl MessageStore {
    /// All messages uniform.
    pub fn new(graph: &FactorGraph) -> Self {
        MessageStore {
            var_to_factor: vec![[0.0; 2]; graph.num_edges()],
            unary_to_var: vec![[0.0; 2]; graph.num_variables()],
            ternary_to_var: vec![[0.0; 2]; 3 * graph.num_ternary()],
        }
    }

    /// Every stored message, both directions.
    pub fn iter(&self) -> impl Iterator<Item = &LogMessage> {
        self.var_to_factor
            .iter()
            .chain(&self.unary_to_var)
            .chain(&self.ternary_to_var)
    }

    fn edge_position(graph: &FactorGraph, var: usize, factor: usize) -> Option<usize> {
        let start = graph.adj_offsets()[var];
        graph
            .incident_factors(var)
            .iter()
            .position(|&f| f == factor)
            .map(|i| start + i)
    }

    fn slot_of(graph: &FactorGraph, var: usize, factor: usize) -> Option<usize> {
        Self::edge_position(graph, var, factor).map(|p| graph.adj_slot()[p] as usize)
    }

    pub fn variable_to_factor(&self, graph: &FactorGraph, var: usize, factor: usize) -> Option<LogMessage> {
        Self::edge_position(graph, var, factor).map(|p| self.var_to_factor[p])
    }

    pub fn set_variable_to_factor(&mut self, graph: &FactorGraph, var: usize, factor: usize, m: LogMessage) {
        let p = Self::edge_position(graph, var, factor).expect("variable is not in factor");
        self.var_to_factor[p] = m;
    }

    pub fn factor_to_variable(&self, graph: &FactorGraph, factor: usize, var: usize) -> Option<LogMessage> {
        let nv = graph.num_variables();
        let slot = Self::slot_of(graph, var, factor)?;
        Some(if factor < nv {
            self.unary_to_var[factor]
        } else {
            self.ternary_to_var[3 * (factor - nv) + slot]
        })
    }

    pub fn set_factor_to_variable(&mut self, graph: &FactorGraph, factor: usize, var: usize, m: LogMessage) {
        let nv = graph.num_variables();
        let slot = Self::slot_of(graph, var, factor).expect("variable is not in factor");
        if factor < nv {
            self.unary_to_var[factor] = m;
        } else {
            self.ternary_to_var[3 * (factor - nv) + slot] = m;
        }
    }

    /// Incoming factor-to-variable message stored for CSR position `pos`.
    #[inline]
    fn incoming(&self, graph: &FactorGraph, pos: usize) -> LogMessage {
        let nv = graph.num_variables();
        let f = graph.adj_factor()[pos];
        if f < nv {
            self.unary_to_var[f]
        } else {
            self.ternary_to_var[3 * (f - nv) + graph.adj_slot()[pos] as usize]
        }
    }
}

/// `m_{x->w}`: sum of the latest messages into `var` from every incident factor
/// except `target_factor`, normalized.
pub fn variable_to_factor_message(
    graph: &FactorGraph,
    store: &MessageStore,
    var: usize,
    target_factor: usize,
) -> LogMessage {
    let start = graph.adj_offsets()[var];
    let mut acc = [0.0, 0.0];
    for (i, &f) in graph.incident_factors(var).iter().enumerate() {
        if f == target_factor {
            continue;
        }
        let m = store.incoming(graph, start + i);
        acc = [log_add(acc[0], m[0]), log_add(acc[1], m[1])];
    }
    normalize(acc)
}

/// Max-sum message from a ternary factor to the variable in `slot`, given the
/// incoming messages of all three slots (the target slot's entry is ignored).
#[inline]
pub fn ternary_message(log_table: &[f64; 8], incoming: &[LogMessage; 3], slot: usize) -> LogMessage {
    ternary_messages(log_table, incoming)[slot]
}

/// All three outgoing messages of a ternary factor in one pass over its table.
///
/// Sums are left unsaturated until normalization: three [`NEG_INF`] terms stay
/// far from overflow, and anything at or below the threshold snaps afterwards.
#[inline]
pub fn ternary_messages(log_table: &[f64; 8], incoming: &[LogMessage; 3]) -> [LogMessage; 3] {
    let [a, b, c] = incoming;
    let mut out = [[f64::NEG_INFINITY; 2]; 3];
    for (cfg, &t) in log_table.iter().enumerate() {
        let (x, y, z) = (cfg >> 2, (cfg >> 1) & 1, cfg & 1);
        out[0][x] = out[0][x].max(t + b[y] + c[z]);
        out[1][y] = out[1][y].max(t + a[x] + c[z]);
        out[2][z] = out[2][z].max(t + a[x] + b[y]);
    }
    out.map(normalize)
}

/// `m_{w->x}` for factor `factor` and one of its variables.
///
/// Unary factors send their normalized log prior; ternary factors maximize over
/// the four configurations of the other two variables.
pub fn factor_to_variable_message(
    graph: &FactorGraph,
    store: &MessageStore,
    factor: usize,
    target_var: usize,
    log_table: &[f64; 8],
) -> LogMessage {
    let nv = graph.num_variables();
    if factor < nv {
        assert_eq!(factor, target_var, "unary factor {factor} does not touch {target_var}");
        return normalize(graph.unary()[factor]);
    }
    let t = factor - nv;
    let edges = graph.ternary_edges()[t];
    let vars = graph.ternary()[t];
    let slot = vars
        .iter()
        .position(|&v| v == target_var)
        .expect("variable is not in factor");
    let incoming = edges.map(|p| store.var_to_factor[p]);
    ternary_message(log_table, &incoming, slot)
}

/// Per-variable sum of incoming messages, with hard zeros counted separately so
/// that one can be excluded without losing the others.
#[derive(Debug, Clone, Copy, Default)]
struct IncomingTotal {
    finite: [f64; 2],
    impossible: [u32; 2],
}

impl IncomingTotal {
    fn add(&mut self, m: LogMessage) {
        for k in 0..2 {
            if is_impossible(m[k]) {
                self.impossible[k] += 1;
            } else {
                self.finite[k] += m[k];
            }
        }
    }

    fn belief(&self) -> LogMessage {
        [0, 1].map(|k| if self.impossible[k] > 0 { NEG_INF } else { snap(self.finite[k]) })
    }

    fn excluding(&self, m: LogMessage) -> LogMessage {
        [0, 1].map(|k| {
            let (hard, finite) = if is_impossible(m[k]) {
                (self.impossible[k] - 1, self.finite[k])
            } else {
                (self.impossible[k], self.finite[k] - m[k])
            };
            if hard > 0 {
                NEG_INF
            } else {
                snap(finite)
            }
        })
    }
}

fn incoming_total(graph: &FactorGraph, store: &MessageStore, var: usize) -> IncomingTotal {
    let mut t = IncomingTotal::default();
    for pos in graph.adj_offsets()[var]..graph.adj_offsets()[var + 1] {
        t.add(store.incoming(graph, pos));
    }
    t
}

fn max_abs_diff(a: &[LogMessage], b: &[LogMessage]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x[0] - y[0]).abs().max((x[1] - y[1]).abs()))
        .fold(0.0, f64::max)
}

fn par_max_abs_diff(a: &[LogMessage], b: &[LogMessage]) -> f64 {
    a.par_iter()
        .zip(b)
        .map(|(x, y)| (x[0] - y[0]).abs().max((x[1] - y[1]).abs()))
        .reduce(|| 0.0, f64::max)
}

struct Engine<'g> {
    graph: &'g FactorGraph,
    /// Variable owning each CSR position.
    edge_var: Vec<usize>,
    log_table: [f64; 8],
    damping: f64,
    parallel: bool,
}

impl<'g> Engine<'g> {
    fn new(graph: &'g FactorGraph, damping: f64) -> Self {
        let mut edge_var = Vec::with_capacity(graph.num_edges());
        for v in 0..graph.num_variables() {
            edge_var.extend(std::iter::repeat_n(v, graph.degree(v)));
        }
        Engine {
            graph,
            edge_var,
            log_table: *graph.log_table(),
            damping,
            parallel: graph.num_edges() >= PARALLEL_MIN_EDGES,
        }
    }

    fn totals(&self, store: &MessageStore) -> Vec<IncomingTotal> {
        let nv = self.graph.num_variables();
        if self.parallel {
            (0..nv)
                .into_par_iter()
                .map(|v| incoming_total(self.graph, store, v))
                .collect()
        } else {
            (0..nv).map(|v| incoming_total(self.graph, store, v)).collect()
        }
    }

    /// One synchronous round; returns the largest message change.
    fn round(&self, prev: &MessageStore, next: &mut MessageStore) -> f64 {
        let g = self.graph;
        let totals = self.totals(prev);

        let var_update = |(pos, out): (usize, &mut LogMessage)| {
            let v = self.edge_var[pos];
            *out = normalize(totals[v].excluding(prev.incoming(g, pos)));
        };
        let unary_update = |(v, out): (usize, &mut LogMessage)| {
            *out = normalize(g.unary()[v]);
        };
        if self.parallel {
            next.var_to_factor.par_iter_mut().enumerate().for_each(var_update);
            next.unary_to_var.par_iter_mut().enumerate().for_each(unary_update);
        } else {
            next.var_to_factor.iter_mut().enumerate().for_each(var_update);
            next.unary_to_var.iter_mut().enumerate().for_each(unary_update);
        }

        let d = self.damping;
        let table = &self.log_table;
        let v2f = &next.var_to_factor;
        let ternary = |((t, out), old): ((usize, &mut [LogMessage]), &[LogMessage])| {
            let incoming = g.ternary_edges()[t].map(|p| v2f[p]);
            let fresh_all = ternary_messages(table, &incoming);
            for slot in 0..3 {
                let fresh = fresh_all[slot];
                out[slot] = if d > 0.0 {
                    normalize([
                        snap(d * old[slot][0] + (1.0 - d) * fresh[0]),
                        snap(d * old[slot][1] + (1.0 - d) * fresh[1]),
                    ])
                } else {
                    fresh
                };
            }
        };
        if self.parallel {
            next.ternary_to_var
                .par_chunks_mut(3)
                .enumerate()
                .zip(prev.ternary_to_var.par_chunks(3))
                .for_each(ternary);
        } else {
            next.ternary_to_var
                .chunks_mut(3)
                .enumerate()
                .zip(prev.ternary_to_var.chunks(3))
                .for_each(ternary);
        }

        let diff = if self.parallel { par_max_abs_diff } else { max_abs_diff };
        diff(&next.var_to_factor, &prev.var_to_factor)
            .max(diff(&next.unary_to_var, &prev.unary_to_var))
            .max(diff(&next.ternary_to_var, &prev.ternary_to_var))
    }
}

/// Runs loopy max-sum and decodes; `observe` sees the message store after every round.
pub fn lbp_map_observed<F>(graph: &FactorGraph, config: &LbpConfig, mut observe: F) -> Result<AssignmentGraph>
where
    F: FnMut(usize, &MessageStore),
{
    config.validate()?;
    let engine = Engine::new(graph, config.damping);
    let mut prev = MessageStore::new(graph);
    let mut next = prev.clone();
    let mut stats = InferenceStats::default();
    for it in 1..=config.max_iterations {
        let delta = engine.round(&prev, &mut next);
        std::mem::swap(&mut prev, &mut next);
        observe(it, &prev);
        stats.iterations = it;
        stats.final_delta = delta;
        if delta < config.tolerance {
            stats.converged = true;
            break;
        }
    }
    stats.message_updates = stats.iterations as u64 * graph.message_updates_per_iteration();

    let totals = engine.totals(&prev);
    let mut labels = Vec::with_capacity(totals.len());
    let mut margins = Vec::with_capacity(totals.len());
    for t in &totals {
        let b = t.belief();
        // ties decode to 0
        labels.push(u8::from(b[1] > b[0]));
        margins.push(belief_margin(b));
    }
    let assignment = finish(graph, labels, margins, stats);
    Ok(if config.repair && !assignment.is_valid() {
        repair_assignment(graph, &assignment, graph.num_variables())
    } else {
        assignment
    })
}

/// Max-product LBP MAP estimate.
pub fn lbp_map(graph: &FactorGraph, config: &LbpConfig) -> Result<AssignmentGraph> {
    lbp_map_observed(graph, config, |_, _| {})
}

fn belief_margin(b: LogMessage) -> f64 {
    match (is_impossible(b[0]), is_impossible(b[1])) {
        (true, true) => 0.0,
        _ => (b[1] - b[0]).clamp(NEG_INF, -NEG_INF),
    }
}

fn finish(graph: &FactorGraph, labels: Vec<u8>, margins: Vec<f64>, stats: InferenceStats) -> AssignmentGraph {
    let violations = violated_cliques(graph, &labels);
    let log_score = joint_log_score(graph, &labels).expect("labels cover the graph");
    AssignmentGraph {
        kind: graph.kind(),
        labels,
        log_score,
        violations,
        margins,
        stats,
    }
}

/// Ternary factor ids whose configuration under `labels` has zero potential.
pub fn violated_cliques(graph: &FactorGraph, labels: &[u8]) -> Vec<usize> {
    let table = graph.log_table();
    graph
        .ternary()
        .iter()
        .enumerate()
        .filter(|(_, t)| is_impossible(table[config_index(labels[t[0]], labels[t[1]], labels[t[2]])]))
        .map(|(i, _)| i)
        .collect()
}

/// Unnormalized joint log-potential of a complete labeling; [`NEG_INF`] if any
/// ternary configuration has zero potential.
pub fn joint_log_score(graph: &FactorGraph, labels: &[u8]) -> Result<f64> {
    if labels.len() != graph.num_variables() {
        return Err(Error::domain(format!(
            "expected {} labels, got {}",
            graph.num_variables(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::domain(format!("label {l} is not binary")));
    }
    let mut score = 0.0;
    for (u, &l) in graph.unary().iter().zip(labels) {
        score = log_add(score, u[l as usize]);
    }
    let table = graph.log_table();
    for t in graph.ternary() {
        let v = table[config_index(labels[t[0]], labels[t[1]], labels[t[2]])];
        if is_impossible(v) {
            return Ok(NEG_INF);
        }
        score += v;
    }
    Ok(snap(score))
}

/// Exhaustive MAP over all `2^V` labelings.
///
/// Ties resolve to the lexicographically smallest label vector. Margins are exact
/// max-marginal differences.
pub fn exact_map_oracle(graph: &FactorGraph) -> Result<AssignmentGraph> {
    let nv = graph.num_variables();
    if nv > ORACLE_MAX_VARIABLES {
        return Err(Error::TooManyVariables {
            cap: ORACLE_MAX_VARIABLES,
            actual: nv,
        });
    }
    let mut labels = vec![0u8; nv];
    let mut best_score = f64::NEG_INFINITY;
    let mut best_mask = 0u64;
    let mut best_by_state = vec![[f64::NEG_INFINITY; 2]; nv];
    for mask in 0..(1u64 << nv) {
        // label 0 is the most significant bit, so ascending masks are ascending
        // label vectors in lexicographic order
        for (i, l) in labels.iter_mut().enumerate() {
            *l = ((mask >> (nv - 1 - i)) & 1) as u8;
        }
        let s = joint_log_score(graph, &labels)?;
        if s > best_score {
            best_score = s;
            best_mask = mask;
        }
        for (i, &l) in labels.iter().enumerate() {
            let slot = &mut best_by_state[i][l as usize];
            if s > *slot {
                *slot = s;
            }
        }
    }
    for (i, l) in labels.iter_mut().enumerate() {
        *l = ((best_mask >> (nv - 1 - i)) & 1) as u8;
    }
    let margins = best_by_state.into_iter().map(belief_margin).collect();
    Ok(finish(
        graph,
        labels,
        margins,
        InferenceStats {
            iterations: 0,
            converged: true,
            final_delta: 0.0,
            message_updates: 0,
        },
    ))
}

/// Removes transitivity violations from a decoded assignment.
///
/// First flips, one at a time, the not-yet-flipped variable with the smallest
/// absolute belief margin among those in violated cliques, up to `flip_budget`
/// flips. If violations remain, raises the zero entries of every violated clique
/// to 1 until none are left; this only ever adds relationships, so it terminates
/// and ends in a valid labeling because the all-ones configuration is always valid.
pub fn repair_assignment(graph: &FactorGraph, assignment: &AssignmentGraph, flip_budget: usize) -> AssignmentGraph {
    let nv = graph.num_variables();
    let mut labels = assignment.labels.clone();
    let mut violated: std::collections::BTreeSet<usize> =
        violated_cliques(graph, &labels).into_iter().collect();
    let table = graph.log_table();
    let is_bad = |labels: &[u8], t: usize| {
        let c = graph.ternary()[t];
        is_impossible(table[config_index(labels[c[0]], labels[c[1]], labels[c[2]])])
    };
    let refresh = |labels: &[u8], v: usize, violated: &mut std::collections::BTreeSet<usize>| {
        for &f in graph.incident_factors(v) {
            if f >= nv {
                if is_bad(labels, f - nv) {
                    violated.insert(f - nv);
                } else {
                    violated.remove(&(f - nv));
                }
            }
        }
    };

    let mut flipped = vec![false; nv];
    let mut flips = 0;
    while !violated.is_empty() && flips < flip_budget {
        let candidate = violated
            .iter()
            .flat_map(|&t| graph.ternary()[t])
            .filter(|&v| !flipped[v])
            .min_by(|&a, &b| {
                assignment.margins[a]
                    .abs()
                    .total_cmp(&assignment.margins[b].abs())
                    .then(a.cmp(&b))
            });
        let Some(v) = candidate else { break };
        labels[v] ^= 1;
        flipped[v] = true;
        flips += 1;
        refresh(&labels, v, &mut violated);
    }
    while let Some(&t) = violated.iter().next() {
        for v in graph.ternary()[t] {
            if labels[v] == 0 {
                labels[v] = 1;
                refresh(&labels, v, &mut violated);
            }
        }
    }
    finish(graph, labels, assignment.margins.clone(), assignment.stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_factor_graph, GraphMode};
    use crate::model::{Concept, Pair, PriorBelief, RelationshipKind, TernaryPotential, VariableSet};
    use crate::priors::PriorTable;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EQ: RelationshipKind = RelationshipKind::Equivalence;

    fn dense(kind: RelationshipKind, priors: &[f64], theta: &[f64]) -> FactorGraph {
        let n = (2..).find(|&n| crate::model::dense_variable_count(n, kind) == priors.len()).unwrap();
        let vars = VariableSet::dense(kind, n);
        let mut table = PriorTable::strict(kind);
        for (v, &p) in priors.iter().enumerate() {
            table.insert(vars.pair(v), PriorBelief::new(p).unwrap()).unwrap();
        }
        FactorGraph::build(&vars, &table, &TernaryPotential::from_free(kind, theta).unwrap()).unwrap()
    }

    // Probability-domain score computed straight from the priors and the table.
    fn product_score(g: &FactorGraph, labels: &[u8]) -> f64 {
        let mut s = 1.0;
        for (v, &l) in labels.iter().enumerate() {
            let p = g.variables()[v].prior.p_one();
            s *= if l == 1 { p } else { 1.0 - p };
        }
        let table = g.log_table().map(f64::exp);
        for t in g.ternary() {
            s *= table[4 * labels[t[0]] as usize + 2 * labels[t[1]] as usize + labels[t[2]] as usize];
        }
        s
    }

    fn brute_force(g: &FactorGraph) -> Vec<u8> {
        let nv = g.num_variables();
        let mut best = (f64::NEG_INFINITY, vec![]);
        for mask in 0..1u32 << nv {
            let labels: Vec<u8> = (0..nv).map(|i| ((mask >> (nv - 1 - i)) & 1) as u8).collect();
            let s = product_score(g, &labels);
            if s > best.0 {
                best = (s, labels);
            }
        }
        best.1
    }

    #[test]
    fn sum_of_two_messages() {
        let a = normalize([0.0, -2.0]);
        let b = normalize([-1.0, 0.0]);
        assert_eq!(normalize([a[0] + b[0], a[1] + b[1]]), [0.0, -1.0]);
    }

    #[test]
    fn unary_message_is_log_prior() {
        let g = dense(EQ, &[0.9], &[1.0; 5]);
        let store = MessageStore::new(&g);
        let m = factor_to_variable_message(&g, &store, 0, 0, g.log_table());
        assert!((m[0] - (0.1f64 / 0.9).ln()).abs() < 1e-12);
        assert_eq!(m[1], 0.0);
    }

    #[test]
    fn pinned_links_force_the_third() {
        // r_ij = r_jk = 1 with certainty leaves r_ik = 0 impossible
        let table = TernaryPotential::default_for(EQ).log_table();
        let one = [NEG_INF, 0.0];
        let m = ternary_message(&table, &[one, one, [0.0, 0.0]], 2);
        assert_eq!(m, [NEG_INF, 0.0]);
        let pc = TernaryPotential::default_for(RelationshipKind::ParentChild).log_table();
        assert_eq!(ternary_message(&pc, &[one, one, [0.0, 0.0]], 2), [NEG_INF, 0.0]);
        // but either link alone is compatible with both states
        let m = ternary_message(&table, &[one, [0.0, 0.0], [0.0, 0.0]], 2);
        assert!(m.iter().all(|x| !is_impossible(*x)));
    }

    #[test]
    fn variable_message_excludes_target() {
        let g = dense(EQ, &[0.7, 0.4, 0.2], &[1.0, 0.5, 0.5, 0.5, 0.9]);
        let mut store = MessageStore::new(&g);
        assert_eq!(variable_to_factor_message(&g, &store, 0, 3), [0.0, 0.0]);
        store.set_factor_to_variable(&g, 3, 0, [-3.0, 0.0]);
        store.set_factor_to_variable(&g, 0, 0, [0.0, -1.0]);
        assert_eq!(variable_to_factor_message(&g, &store, 0, 3), [0.0, -1.0]);
        let to_unary = variable_to_factor_message(&g, &store, 0, 0);
        assert_eq!(to_unary, [-3.0, 0.0]);
    }

    #[test]
    fn conflict_scenario_by_hand() {
        // priors in variable order (0,1), (0,2), (1,2)
        let g = dense(EQ, &[0.6, 0.1, 0.6], &[1.0, 0.3, 0.3, 0.3, 0.9]);
        let s = |l: [u8; 3]| product_score(&g, &l);
        // table normalized by its max entry 1
        assert!((s([0, 0, 0]) - 0.144).abs() < 1e-12);
        assert!((s([1, 1, 1]) - 0.0324).abs() < 1e-12);
        assert!((s([1, 0, 0]) - 0.0648).abs() < 1e-12);
        assert_eq!(s([1, 0, 1]), 0.0);
        let lbp = lbp_map(&g, &LbpConfig::default()).unwrap();
        let exact = exact_map_oracle(&g).unwrap();
        assert_eq!(exact.labels, vec![0, 0, 0]);
        assert_eq!(lbp.labels, exact.labels);
        assert!(lbp.violations.is_empty());
        assert!((joint_log_score(&g, &[1, 0, 1]).unwrap() - NEG_INF).abs() < 1.0);
        assert!((joint_log_score(&g, &[1, 1, 1]).unwrap() - 0.0324f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn oracle_matches_independent_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let kind = if rng.random_bool(0.5) { EQ } else { RelationshipKind::ParentChild };
            let n = if kind == EQ { rng.random_range(3..=5) } else { 3 };
            let nv = crate::model::dense_variable_count(n, kind);
            let priors: Vec<f64> = (0..nv).map(|_| rng.random_range(0.02..0.98)).collect();
            let k = crate::model::free_positions(kind).len();
            let theta: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let g = dense(kind, &priors, &theta);
            let exact = exact_map_oracle(&g).unwrap();
            assert_eq!(exact.labels, brute_force(&g));
            assert!(exact.violations.is_empty());
            let direct = product_score(&g, &exact.labels).ln();
            assert!((exact.log_score - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn single_clique_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let priors: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..0.99)).collect();
            let theta: Vec<f64> = (0..5).map(|_| rng.random_range(0.05..1.0)).collect();
            let g = dense(EQ, &priors, &theta);
            assert_eq!(lbp_map(&g, &LbpConfig::default()).unwrap().labels, brute_force(&g));
        }
    }

    #[test]
    fn unary_only_graph_converges_to_prior_argmax() {
        let concepts: Vec<Concept> = (0..2).map(|i| Concept::new(i, format!("c{i}")).unwrap()).collect();
        let mut priors = PriorTable::strict(EQ);
        priors.insert(Pair::new(0, 1), PriorBelief::new(0.7).unwrap()).unwrap();
        let g = build_factor_graph(&concepts, &priors, &TernaryPotential::default_for(EQ), &GraphMode::Dense).unwrap();
        let a = lbp_map(&g, &LbpConfig::default()).unwrap();
        assert_eq!(a.labels, vec![1]);
        assert!(a.stats.converged);
        assert_eq!(a.stats.iterations, 2);
        assert!((a.margins[0] - (0.7f64 / 0.3).ln()).abs() < 1e-12);
    }

    #[test]
    fn table_scale_does_not_change_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let priors: Vec<f64> = (0..10).map(|_| rng.random_range(0.05..0.95)).collect();
            let theta: Vec<f64> = (0..5).map(|_| rng.random_range(0.05..1.0)).collect();
            let g = dense(EQ, &priors, &theta);
            let base = lbp_map(&g, &LbpConfig::default()).unwrap().labels;
            for c in [0.1, 10.0] {
                let scaled = g.with_ternary_scale(c).unwrap();
                assert_eq!(lbp_map(&scaled, &LbpConfig::default()).unwrap().labels, base);
            }
        }
    }

    #[test]
    fn messages_stay_normalized_and_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let priors: Vec<f64> = (0..15).map(|_| rng.random_range(0.01..0.99)).collect();
        let g = dense(EQ, &priors, &[1.0, 0.2, 0.2, 0.2, 0.8]);
        lbp_map_observed(&g, &LbpConfig::default(), |_, store| {
            for m in store.iter() {
                assert!(m.iter().all(|x| !x.is_nan()));
                assert_eq!(m[0].max(m[1]), 0.0);
            }
        })
        .unwrap();
    }

    #[test]
    fn update_count_follows_edges() {
        let g = dense(EQ, &[0.5; 6], &[1.0; 5]);
        let a = lbp_map(&g, &LbpConfig { tolerance: 0.0, max_iterations: 7, ..Default::default() }).unwrap();
        assert_eq!(a.stats.iterations, 7);
        assert!(!a.stats.converged);
        assert_eq!(a.stats.message_updates, 7 * g.message_updates_per_iteration());
    }

    #[test]
    fn repair_clears_violations() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let priors: Vec<f64> = (0..10).map(|_| rng.random_range(0.05..0.95)).collect();
            let g = dense(EQ, &priors, &[1.0, 0.9, 0.9, 0.9, 1.0]);
            let labels: Vec<u8> = priors.iter().map(|&p| u8::from(p > 0.5)).collect();
            let margins: Vec<f64> = priors.iter().map(|&p| (p / (1.0 - p)).ln()).collect();
            let raw = finish(&g, labels, margins, InferenceStats::default());
            for budget in [0, 2, 10] {
                let fixed = repair_assignment(&g, &raw, budget);
                assert!(fixed.is_valid());
                assert!(fixed.log_score >= raw.log_score);
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let g = dense(EQ, &[0.5], &[1.0; 5]);
        for c in [
            LbpConfig { damping: 1.0, ..Default::default() },
            LbpConfig { max_iterations: 0, ..Default::default() },
            LbpConfig { tolerance: f64::NAN, ..Default::default() },
        ] {
            assert!(lbp_map(&g, &c).is_err());
        }
        let big = VariableSet::dense(EQ, 8);
        let g = FactorGraph::build(&big, &PriorTable::with_default(EQ, 0.3), &TernaryPotential::default_for(EQ)).unwrap();
        assert!(matches!(exact_map_oracle(&g), Err(Error::TooManyVariables { .. })));
    }
}
