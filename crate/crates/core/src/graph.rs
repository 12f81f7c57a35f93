//! Factor graph construction.
//!
//! Factor ids are laid out as `0..V` for the unary factors (factor `v` is the
//! prior of variable `v`) followed by `V..V+T` for the ternary factors. Each
//! ternary factor lists its variables as `(r_ij, r_jk, r_ik)` so one shared log
//! table indexes configurations consistently across the graph.
//!
//! Adjacency is stored as CSR: the incident factors of variable `v` are
//! `adj_factor[adj_offsets[v]..adj_offsets[v + 1]]`, unary factor first. The CSR
//! position doubles as the storage slot of the variable-to-factor message on that
//! edge.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    validate_vocabulary, Concept, Pair, RelationshipKind, RelationshipVariable, TernaryPotential,
    VariableSet,
};
use crate::priors::PriorTable;

/// How candidate variables are chosen from a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphMode {
    /// Every pair over the vocabulary.
    Dense,
    /// An explicit candidate pair list.
    Sparse(Vec<Pair>),
}

#[derive(Debug, Clone)]
pub struct FactorGraph {
    vars: VariableSet,
    variables: Vec<RelationshipVariable>,
    unary: Vec<[f64; 2]>,
    ternary: Vec<[usize; 3]>,
    log_table: [f64; 8],
    adj_offsets: Vec<usize>,
    adj_factor: Vec<usize>,
    /// Position (0..3) of the variable inside the factor; 0 for unary factors.
    adj_slot: Vec<u8>,
    /// CSR position of each ternary slot.
    ternary_edges: Vec<[usize; 3]>,
}

/// Closed-form size of a dense graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GraphStats {
    pub variables: u64,
    pub unary_factors: u64,
    pub ternary_factors: u64,
    pub edges: u64,
}

impl GraphStats {
    pub fn total_factors(&self) -> u64 {
        self.unary_factors + self.ternary_factors
    }
}

/// Variable, factor and edge counts of the dense graph over `n` concepts,
/// without materializing it.
pub fn count_graph_stats(n: usize, kind: RelationshipKind) -> Result<GraphStats> {
    if n < 2 {
        return Err(Error::domain(format!("graph needs at least 2 concepts, got {n}")));
    }
    let n = n as u64;
    let (variables, ternary_factors) = match kind {
        RelationshipKind::Equivalence => (n * (n - 1) / 2, n * (n - 1) * (n - 2) / 6),
        // One factor per ordered triple of distinct concepts.
        RelationshipKind::ParentChild => (n * (n - 1), n * (n - 1) * (n - 2)),
    };
    Ok(GraphStats {
        variables,
        unary_factors: variables,
        ternary_factors,
        edges: variables + 3 * ternary_factors,
    })
}

/// Ternary cliques over a variable set, as variable-id triples `(r_ij, r_jk, r_ik)`.
///
/// A clique is emitted only when all three constituent pairs are variables.
/// Equivalence cliques are the concept triples `i < j < k`; parent-child cliques
/// are the directed patterns `i->j, j->k, i->k` over distinct concepts. Output is
/// sorted lexicographically by `(i, j, k)`.
pub fn enumerate_ternary_cliques(vars: &VariableSet) -> Vec<[usize; 3]> {
    let n = vars.n_concepts();
    // successors[a] lists b with a variable (a, b); for equivalence only b > a.
    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for p in vars.pairs() {
        successors[p.left].push(p.right);
    }
    for s in &mut successors {
        s.sort_unstable();
    }
    let mut out = Vec::new();
    for i in 0..n {
        for &j in &successors[i] {
            let ij = vars.get(i, j).expect("listed pair");
            for &k in &successors[j] {
                if k == i {
                    continue;
                }
                if let Some(ik) = vars.get(i, k) {
                    let jk = vars.get(j, k).expect("listed pair");
                    out.push([ij, jk, ik]);
                }
            }
        }
    }
    out
}

/// Builds the factor graph for a vocabulary.
pub fn build_factor_graph(
    concepts: &[Concept],
    priors: &PriorTable,
    potential: &TernaryPotential,
    mode: &GraphMode,
) -> Result<FactorGraph> {
    validate_vocabulary(concepts)?;
    let kind = potential.kind();
    let vars = match mode {
        GraphMode::Dense => VariableSet::dense(kind, concepts.len()),
        GraphMode::Sparse(pairs) => {
            VariableSet::from_pairs(kind, concepts.len(), pairs.iter().copied())?
        }
    };
    FactorGraph::build(&vars, priors, potential)
}

impl FactorGraph {
    /// Builds unary factors from `priors` and ternary factors from `potential`.
    ///
    /// Pairs absent from `priors` take its default; a table without a default is
    /// strict and reports [`Error::MissingPrior`].
    pub fn build(vars: &VariableSet, priors: &PriorTable, potential: &TernaryPotential) -> Result<Self> {
        if vars.kind() != potential.kind() {
            return Err(Error::config(format!(
                "variables are {} but the potential is {}",
                vars.kind(),
                potential.kind()
            )));
        }
        let mut variables = Vec::with_capacity(vars.len());
        for &p in vars.pairs() {
            let prior = priors.get(p).ok_or(Error::MissingPrior {
                left: p.left,
                right: p.right,
            })?;
            variables.push(RelationshipVariable {
                left: p.left,
                right: p.right,
                prior,
            });
        }
        let unary = variables.iter().map(|v| v.prior.log_potentials()).collect();
        let ternary = enumerate_ternary_cliques(vars);
        Ok(Self::assemble(
            vars.clone(),
            variables,
            unary,
            ternary,
            potential.log_table(),
        ))
    }

    fn assemble(
        vars: VariableSet,
        variables: Vec<RelationshipVariable>,
        unary: Vec<[f64; 2]>,
        ternary: Vec<[usize; 3]>,
        log_table: [f64; 8],
    ) -> Self {
        let nv = variables.len();
        let mut degree = vec![1usize; nv];
        for t in &ternary {
            for &v in t {
                degree[v] += 1;
            }
        }
        let mut adj_offsets = Vec::with_capacity(nv + 1);
        adj_offsets.push(0);
        for d in &degree {
            adj_offsets.push(adj_offsets.last().unwrap() + d);
        }
        let n_edges = *adj_offsets.last().unwrap();
        let mut adj_factor = vec![0usize; n_edges];
        let mut adj_slot = vec![0u8; n_edges];
        let mut cursor: Vec<usize> = adj_offsets[..nv].to_vec();
        for v in 0..nv {
            adj_factor[cursor[v]] = v;
            cursor[v] += 1;
        }
        let mut ternary_edges = Vec::with_capacity(ternary.len());
        for (t, vs) in ternary.iter().enumerate() {
            let mut edges = [0usize; 3];
            for (slot, &v) in vs.iter().enumerate() {
                let pos = cursor[v];
                adj_factor[pos] = nv + t;
                adj_slot[pos] = slot as u8;
                edges[slot] = pos;
                cursor[v] += 1;
            }
            ternary_edges.push(edges);
        }
        FactorGraph {
            vars,
            variables,
            unary,
            ternary,
            log_table,
            adj_offsets,
            adj_factor,
            adj_slot,
            ternary_edges,
        }
    }

    pub fn kind(&self) -> RelationshipKind {
        self.vars.kind()
    }

    pub fn n_concepts(&self) -> usize {
        self.vars.n_concepts()
    }

    pub fn variable_set(&self) -> &VariableSet {
        &self.vars
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn num_ternary(&self) -> usize {
        self.ternary.len()
    }

    /// Unary plus ternary factors.
    pub fn num_factors(&self) -> usize {
        self.variables.len() + self.ternary.len()
    }

    /// Variable-factor edges: one per unary factor plus three per ternary factor.
    pub fn num_edges(&self) -> usize {
        self.adj_factor.len()
    }

    pub fn variables(&self) -> &[RelationshipVariable] {
        &self.variables
    }

    pub fn pairs(&self) -> &[Pair] {
        self.vars.pairs()
    }

    /// `[ln p_zero, ln p_one]` per variable.
    pub fn unary(&self) -> &[[f64; 2]] {
        &self.unary
    }

    pub fn ternary(&self) -> &[[usize; 3]] {
        &self.ternary
    }

    pub fn log_table(&self) -> &[f64; 8] {
        &self.log_table
    }

    pub fn degree(&self, var: usize) -> usize {
        self.adj_offsets[var + 1] - self.adj_offsets[var]
    }

    /// Factor ids incident to `var`, unary factor first.
    pub fn incident_factors(&self, var: usize) -> &[usize] {
        &self.adj_factor[self.adj_offsets[var]..self.adj_offsets[var + 1]]
    }

    /// Variables touched by factor `factor`.
    pub fn factor_variables(&self, factor: usize) -> Vec<usize> {
        let nv = self.variables.len();
        if factor < nv {
            vec![factor]
        } else {
            self.ternary[factor - nv].to_vec()
        }
    }

    /// Message computations in one synchronous round: one per direction per edge.
    pub fn message_updates_per_iteration(&self) -> u64 {
        2 * self.num_edges() as u64
    }

    pub(crate) fn adj_offsets(&self) -> &[usize] {
        &self.adj_offsets
    }

    pub(crate) fn adj_factor(&self) -> &[usize] {
        &self.adj_factor
    }

    pub(crate) fn adj_slot(&self) -> &[u8] {
        &self.adj_slot
    }

    pub(crate) fn ternary_edges(&self) -> &[[usize; 3]] {
        &self.ternary_edges
    }

    /// Variable id of a pair, if present.
    pub fn variable_of(&self, pair: Pair) -> Option<usize> {
        self.vars.get(pair.left, pair.right)
    }

    /// Copy of this graph with every ternary entry multiplied by `c > 0`
    /// (added as `ln c` in the log domain), without renormalizing.
    pub fn with_ternary_scale(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::domain(format!("scale must be finite and > 0, got {c}")));
        }
        let mut g = self.clone();
        let shift = c.ln();
        for v in &mut g.log_table {
            *v = crate::model::log_add(*v, shift);
        }
        Ok(g)
    }

    /// Copy of this graph with a different shared ternary potential.
    pub fn with_potential(&self, potential: &TernaryPotential) -> Result<Self> {
        if potential.kind() != self.kind() {
            return Err(Error::config("potential kind does not match graph"));
        }
        let mut g = self.clone();
        g.log_table = potential.log_table();
        Ok(g)
    }
}
