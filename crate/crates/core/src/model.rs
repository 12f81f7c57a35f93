//! Domain types shared by every stage of the pipeline.
//!
//! A vocabulary of [`Concept`]s induces one binary random variable per candidate
//! pair. For [`RelationshipKind::Equivalence`] the pair is unordered and stored
//! canonically as `(min, max)`; for [`RelationshipKind::ParentChild`] the pair is
//! ordered and state 1 means "left is the parent of right".

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower/upper clamp applied to every prior probability before taking logs.
pub const PRIOR_EPSILON: f64 = 1e-6;

/// Log-domain stand-in for `ln 0`.
///
/// A finite sentinel keeps message arithmetic free of `inf - inf`. Every log-domain
/// operation in the crate saturates at this value, so any quantity at or below
/// [`IMPOSSIBLE_THRESHOLD`] reads as "zero potential".
pub const NEG_INF: f64 = -1e30;

/// Values at or below this are treated as [`NEG_INF`].
pub const IMPOSSIBLE_THRESHOLD: f64 = NEG_INF * 1e-10;

/// Saturating log-domain addition.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    snap(a + b)
}

/// Maps anything at or below [`IMPOSSIBLE_THRESHOLD`] onto [`NEG_INF`].
#[inline]
pub fn snap(x: f64) -> f64 {
    if x <= IMPOSSIBLE_THRESHOLD {
        NEG_INF
    } else {
        x
    }
}

/// `ln p` with `ln 0` mapped to [`NEG_INF`].
#[inline]
pub fn safe_ln(p: f64) -> f64 {
    if p > 0.0 {
        snap(p.ln())
    } else {
        NEG_INF
    }
}

#[inline]
pub fn is_impossible(x: f64) -> bool {
    x <= IMPOSSIBLE_THRESHOLD
}

/// A named metadata unit: a column header, a product record, a taxonomy term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub id: usize,
    pub name: String,
    #[serde(default)]
    pub values: Vec<String>,
}

impl Concept {
    pub fn new(id: usize, name: impl Into<String>) -> Result<Self> {
        Self::with_values(id, name, Vec::new())
    }

    pub fn with_values(id: usize, name: impl Into<String>, values: Vec<String>) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::domain(format!("concept {id} has an empty name")));
        }
        Ok(Concept { id, name, values })
    }
}

/// Checks that concept ids are exactly `0..n` in order.
pub fn validate_vocabulary(concepts: &[Concept]) -> Result<()> {
    for (pos, c) in concepts.iter().enumerate() {
        if c.id != pos {
            return Err(Error::domain(format!(
                "concept ids must be contiguous from 0: expected id {pos}, found {}",
                c.id
            )));
        }
        if c.name.trim().is_empty() {
            return Err(Error::domain(format!("concept {} has an empty name", c.id)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationshipKind {
    Equivalence,
    ParentChild,
}

impl fmt::Display for RelationshipKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelationshipKind::Equivalence => f.write_str("equivalence"),
            RelationshipKind::ParentChild => f.write_str("parent-child"),
        }
    }
}

impl FromStr for RelationshipKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "equivalence" | "eq" => Ok(RelationshipKind::Equivalence),
            "parent-child" | "parent_child" | "parentchild" | "pc" => {
                Ok(RelationshipKind::ParentChild)
            }
            other => Err(Error::config(format!("unknown relationship kind '{other}'"))),
        }
    }
}

/// A candidate concept pair. Ordering is lexicographic on `(left, right)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    pub left: usize,
    pub right: usize,
}

impl Pair {
    pub const fn new(left: usize, right: usize) -> Self {
        Pair { left, right }
    }

    /// Canonical form for `kind`: sorted for equivalence, untouched otherwise.
    pub fn canonical(self, kind: RelationshipKind) -> Self {
        match kind {
            RelationshipKind::Equivalence if self.left > self.right => {
                Pair::new(self.right, self.left)
            }
            _ => self,
        }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.left, self.right)
    }
}

/// Probability that a relationship holds for one pair, as produced by an upstream model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorBelief {
    p_one: f64,
}

impl PriorBelief {
    /// Clamps `p_one` into `[PRIOR_EPSILON, 1 - PRIOR_EPSILON]`.
    ///
    /// Non-finite input or values outside `[0, 1]` are rejected.
    pub fn new(p_one: f64) -> Result<Self> {
        if !p_one.is_finite() || !(0.0..=1.0).contains(&p_one) {
            return Err(Error::domain(format!("probability {p_one} outside [0, 1]")));
        }
        Ok(PriorBelief {
            p_one: p_one.clamp(PRIOR_EPSILON, 1.0 - PRIOR_EPSILON),
        })
    }

    pub fn p_one(&self) -> f64 {
        self.p_one
    }

    pub fn p_zero(&self) -> f64 {
        1.0 - self.p_one
    }

    /// Prior prediction; a tie at 0.5 predicts 0.
    pub fn argmax(&self) -> u8 {
        u8::from(self.p_one > 0.5)
    }

    /// `[ln p_zero, ln p_one]`.
    pub fn log_potentials(&self) -> [f64; 2] {
        [self.p_zero().ln(), self.p_one.ln()]
    }
}

/// Dense index of a pair in the full pair lattice over `n` concepts.
///
/// Equivalence pairs are canonicalized first and indexed lexicographically over
/// `i < j`, giving a bijection onto `[0, n(n-1)/2)`. Parent-child pairs index
/// row-major over all ordered pairs with `left != right`, onto `[0, n(n-1))`.
pub fn variable_index(left: usize, right: usize, n: usize, kind: RelationshipKind) -> Result<usize> {
    if left >= n || right >= n {
        return Err(Error::domain(format!(
            "pair ({left}, {right}) out of range for {n} concepts"
        )));
    }
    if left == right {
        return Err(Error::domain(format!("self pair ({left}, {left})")));
    }
    Ok(match kind {
        RelationshipKind::Equivalence => {
            let (i, j) = (left.min(right), left.max(right));
            i * (2 * n - i - 1) / 2 + (j - i - 1)
        }
        RelationshipKind::ParentChild => {
            left * (n - 1) + if right < left { right } else { right - 1 }
        }
    })
}

/// Inverse of [`variable_index`].
pub fn pair_at(index: usize, n: usize, kind: RelationshipKind) -> Result<Pair> {
    let count = dense_variable_count(n, kind);
    if index >= count {
        return Err(Error::domain(format!(
            "variable index {index} out of range ({count} variables)"
        )));
    }
    Ok(match kind {
        RelationshipKind::Equivalence => {
            // Row i starts at i(2n-i-1)/2; walk rows, n is small relative to index arithmetic.
            let mut i = 0;
            let mut start = 0;
            loop {
                let row_len = n - i - 1;
                if index < start + row_len {
                    break Pair::new(i, i + 1 + (index - start));
                }
                start += row_len;
                i += 1;
            }
        }
        RelationshipKind::ParentChild => {
            let left = index / (n - 1);
            let r = index % (n - 1);
            Pair::new(left, if r < left { r } else { r + 1 })
        }
    })
}

/// Number of variables in dense mode over `n` concepts.
pub fn dense_variable_count(n: usize, kind: RelationshipKind) -> usize {
    match kind {
        RelationshipKind::Equivalence => n * n.saturating_sub(1) / 2,
        RelationshipKind::ParentChild => n * n.saturating_sub(1),
    }
}

/// The set of relationship variables of one graph: the pairs in id order plus a
/// reverse lookup.
#[derive(Debug, Clone)]
pub struct VariableSet {
    kind: RelationshipKind,
    n_concepts: usize,
    pairs: Vec<Pair>,
    lookup: HashMap<Pair, usize>,
}

impl VariableSet {
    /// Every pair over `n` concepts, ordered so that variable id == [`variable_index`].
    pub fn dense(kind: RelationshipKind, n: usize) -> Self {
        let mut pairs = Vec::with_capacity(dense_variable_count(n, kind));
        for i in 0..n {
            match kind {
                RelationshipKind::Equivalence => {
                    pairs.extend((i + 1..n).map(|j| Pair::new(i, j)));
                }
                RelationshipKind::ParentChild => {
                    pairs.extend((0..n).filter(|&j| j != i).map(|j| Pair::new(i, j)));
                }
            }
        }
        Self::from_canonical(kind, n, pairs)
    }

    /// Variables for an explicit candidate list, in the given order.
    ///
    /// Equivalence pairs are canonicalized; a pair listed twice (including `(i,j)`
    /// and `(j,i)` under equivalence) is an error.
    pub fn from_pairs<I>(kind: RelationshipKind, n: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = Pair>,
    {
        let mut out = Vec::new();
        let mut lookup = HashMap::new();
        for p in pairs {
            if p.left >= n || p.right >= n {
                return Err(Error::domain(format!("pair {p} out of range for {n} concepts")));
            }
            if p.left == p.right {
                return Err(Error::domain(format!("self pair {p}")));
            }
            let c = p.canonical(kind);
            if lookup.insert(c, out.len()).is_some() {
                return Err(Error::domain(format!("duplicate pair {c}")));
            }
            out.push(c);
        }
        Ok(VariableSet {
            kind,
            n_concepts: n,
            pairs: out,
            lookup,
        })
    }

    fn from_canonical(kind: RelationshipKind, n: usize, pairs: Vec<Pair>) -> Self {
        let lookup = pairs.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        VariableSet {
            kind,
            n_concepts: n,
            pairs,
            lookup,
        }
    }

    pub fn kind(&self) -> RelationshipKind {
        self.kind
    }

    pub fn n_concepts(&self) -> usize {
        self.n_concepts
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn pair(&self, var: usize) -> Pair {
        self.pairs[var]
    }

    /// Variable id of a pair, canonicalizing for equivalence.
    pub fn get(&self, left: usize, right: usize) -> Option<usize> {
        self.lookup
            .get(&Pair::new(left, right).canonical(self.kind))
            .copied()
    }
}

/// One relationship variable with its prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationshipVariable {
    pub left: usize,
    pub right: usize,
    pub prior: PriorBelief,
}

/// Index into a ternary table for configuration `(r_ij, r_jk, r_ik)`.
#[inline]
pub const fn config_index(r_ij: u8, r_jk: u8, r_ik: u8) -> usize {
    ((r_ij as usize) << 2) | ((r_jk as usize) << 1) | (r_ik as usize)
}

/// Whether configuration `index` breaks transitivity for `kind`.
///
/// Equivalence forbids exactly the configurations with two ones and one zero;
/// parent-child forbids only `i->j, j->k, not i->k`.
pub const fn is_forbidden(kind: RelationshipKind, index: usize) -> bool {
    match kind {
        RelationshipKind::Equivalence => index.count_ones() == 2,
        RelationshipKind::ParentChild => index == config_index(1, 1, 0),
    }
}

/// Table positions of the free parameters, in the order they are numbered.
pub fn free_positions(kind: RelationshipKind) -> Vec<usize> {
    (0..8).filter(|&i| !is_forbidden(kind, i)).collect()
}

/// Shared potential over ternary cliques `(r_ij, r_jk, r_ik)`.
///
/// Forbidden configurations are pinned to zero; every other entry is a strictly
/// positive free parameter. Equivalence has five free parameters
/// (`[000, 001, 010, 100, 111]`), parent-child seven (everything except `110`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TernaryPotential {
    kind: RelationshipKind,
    table: [f64; 8],
}

impl TernaryPotential {
    /// Default equivalence parameters: `(1, 0.25, 0.25, 0.25, 0.75)`.
    pub const DEFAULT_EQUIVALENCE: [f64; 5] = [1.0, 0.25, 0.25, 0.25, 0.75];
    /// Default parent-child parameters, same shape as the equivalence default.
    pub const DEFAULT_PARENT_CHILD: [f64; 7] = [1.0, 0.25, 0.25, 0.25, 0.25, 0.25, 0.75];

    /// Builds a potential from its free parameters, in table order.
    pub fn from_free(kind: RelationshipKind, params: &[f64]) -> Result<Self> {
        let positions = free_positions(kind);
        if params.len() != positions.len() {
            return Err(Error::domain(format!(
                "{kind} potential takes {} parameters, got {}",
                positions.len(),
                params.len()
            )));
        }
        let mut table = [0.0; 8];
        for (&pos, &v) in positions.iter().zip(params) {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!(
                    "potential parameters must be finite and > 0, got {v}"
                )));
            }
            table[pos] = v;
        }
        Ok(TernaryPotential { kind, table }.normalized())
    }

    pub fn equivalence(theta: [f64; 5]) -> Result<Self> {
        Self::from_free(RelationshipKind::Equivalence, &theta)
    }

    pub fn parent_child(theta: [f64; 7]) -> Result<Self> {
        Self::from_free(RelationshipKind::ParentChild, &theta)
    }

    pub fn default_for(kind: RelationshipKind) -> Self {
        match kind {
            RelationshipKind::Equivalence => Self::equivalence(Self::DEFAULT_EQUIVALENCE),
            RelationshipKind::ParentChild => Self::parent_child(Self::DEFAULT_PARENT_CHILD),
        }
        .expect("default parameters are valid")
    }

    /// Validates a full 8-entry table and normalizes it.
    pub fn from_table(kind: RelationshipKind, table: [f64; 8]) -> Result<Self> {
        for (i, &v) in table.iter().enumerate() {
            if is_forbidden(kind, i) {
                if v != 0.0 {
                    return Err(Error::domain(format!(
                        "configuration {i:03b} violates transitivity and must be 0, got {v}"
                    )));
                }
            } else if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!(
                    "configuration {i:03b} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(TernaryPotential { kind, table }.normalized())
    }

    fn normalized(mut self) -> Self {
        let max = self.table.iter().cloned().fold(0.0, f64::max);
        for v in &mut self.table {
            *v /= max;
        }
        self
    }

    pub fn kind(&self) -> RelationshipKind {
        self.kind
    }

    pub fn table(&self) -> &[f64; 8] {
        &self.table
    }

    pub fn free_params(&self) -> Vec<f64> {
        free_positions(self.kind)
            .into_iter()
            .map(|i| self.table[i])
            .collect()
    }

    /// Log table with zero entries mapped to [`NEG_INF`].
    pub fn log_table(&self) -> [f64; 8] {
        self.table.map(safe_ln)
    }
}

/// Bookkeeping from one inference run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InferenceStats {
    pub iterations: usize,
    pub converged: bool,
    /// Largest absolute message change in the final round.
    pub final_delta: f64,
    /// Message computations performed across all rounds.
    pub message_updates: u64,
}

/// A decoded relationship assignment over every variable of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentGraph {
    pub kind: RelationshipKind,
    /// State per variable id.
    pub labels: Vec<u8>,
    /// Unnormalized joint log-potential; [`NEG_INF`] when any clique is violated.
    pub log_score: f64,
    /// Ternary factor ids whose decoded configuration has zero potential.
    pub violations: Vec<usize>,
    /// `belief(1) - belief(0)` per variable, in the log domain.
    pub margins: Vec<f64>,
    pub stats: InferenceStats,
}

impl AssignmentGraph {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EQ: RelationshipKind = RelationshipKind::Equivalence;
    const PC: RelationshipKind = RelationshipKind::ParentChild;

    #[test]
    fn variable_index_examples() {
        assert_eq!(variable_index(0, 1, 4, EQ).unwrap(), 0);
        assert_eq!(variable_index(1, 0, 4, EQ).unwrap(), 0);
        // Lexicographic enumeration of the six pairs over 4 concepts.
        let enumerated: Vec<(usize, usize)> = (0..4)
            .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
            .collect();
        let pos = enumerated.iter().position(|&p| p == (2, 3)).unwrap();
        assert_eq!(pos, 5);
        assert_eq!(variable_index(2, 3, 4, EQ).unwrap(), 5);
    }

    #[test]
    fn variable_index_errors() {
        assert!(variable_index(0, 4, 4, EQ).is_err());
        assert!(variable_index(2, 2, 4, EQ).is_err());
        assert!(variable_index(5, 1, 4, PC).is_err());
    }

    #[test]
    fn variable_index_is_bijective() {
        for n in 2..=100 {
            for kind in [EQ, PC] {
                let count = dense_variable_count(n, kind);
                for idx in 0..count {
                    let p = pair_at(idx, n, kind).unwrap();
                    assert_eq!(variable_index(p.left, p.right, n, kind).unwrap(), idx);
                    if kind == EQ {
                        assert!(p.left < p.right);
                    }
                }
                assert!(pair_at(count, n, kind).is_err());
            }
        }
    }

    #[test]
    fn dense_set_matches_index() {
        for kind in [EQ, PC] {
            let set = VariableSet::dense(kind, 7);
            assert_eq!(set.len(), dense_variable_count(7, kind));
            for (id, p) in set.pairs().iter().enumerate() {
                assert_eq!(variable_index(p.left, p.right, 7, kind).unwrap(), id);
            }
        }
        assert_eq!(VariableSet::dense(EQ, 46).len(), 1035);
    }

    #[test]
    fn from_pairs_rejects_symmetric_duplicate() {
        let err = VariableSet::from_pairs(EQ, 3, [Pair::new(0, 1), Pair::new(1, 0)]);
        assert!(err.is_err());
        let ok = VariableSet::from_pairs(PC, 3, [Pair::new(0, 1), Pair::new(1, 0)]).unwrap();
        assert_eq!(ok.len(), 2);
        assert_eq!(ok.get(1, 0), Some(1));
    }

    #[test]
    fn prior_clamping() {
        assert_eq!(PriorBelief::new(1.0).unwrap().p_one(), 1.0 - PRIOR_EPSILON);
        assert_eq!(PriorBelief::new(0.0).unwrap().p_one(), PRIOR_EPSILON);
        assert_eq!(PriorBelief::new(0.9).unwrap().p_one(), 0.9);
        assert!(PriorBelief::new(1.5).is_err());
        assert!(PriorBelief::new(f64::NAN).is_err());
        assert_eq!(PriorBelief::new(0.5).unwrap().argmax(), 0);
        assert_eq!(PriorBelief::new(0.51).unwrap().argmax(), 1);
    }

    #[test]
    fn equivalence_zero_entries() {
        let pot = TernaryPotential::default_for(EQ);
        let zeros: Vec<usize> = (0..8).filter(|&i| pot.table()[i] == 0.0).collect();
        assert_eq!(
            zeros,
            vec![config_index(0, 1, 1), config_index(1, 0, 1), config_index(1, 1, 0)]
        );
        for i in 0..8 {
            let ones = (i as u32).count_ones();
            assert_eq!(pot.table()[i] == 0.0, ones == 2);
        }
    }

    #[test]
    fn parent_child_zero_entry() {
        let pot = TernaryPotential::default_for(PC);
        for i in 0..8 {
            assert_eq!(pot.table()[i] == 0.0, i == config_index(1, 1, 0));
        }
        assert_eq!(pot.free_params().len(), 7);
    }

    #[test]
    fn potential_normalization() {
        let pot = TernaryPotential::equivalence([2.0, 0.5, 0.5, 0.5, 4.0]).unwrap();
        assert_eq!(pot.free_params(), vec![0.5, 0.125, 0.125, 0.125, 1.0]);
        assert!(pot.free_params().iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!(TernaryPotential::equivalence([1.0, 0.0, 0.5, 0.5, 1.0]).is_err());
        let mut bad = [1.0; 8];
        assert!(TernaryPotential::from_table(EQ, bad).is_err());
        for i in 0..8 {
            if is_forbidden(EQ, i) {
                bad[i] = 0.0;
            }
        }
        assert!(TernaryPotential::from_table(EQ, bad).is_ok());
    }

    #[test]
    fn log_helpers_saturate() {
        assert_eq!(log_add(NEG_INF, 5.0), NEG_INF);
        assert_eq!(log_add(NEG_INF, NEG_INF), NEG_INF);
        assert_eq!(safe_ln(0.0), NEG_INF);
        assert!((log_add(-1.0, -2.0) + 3.0).abs() < 1e-15);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("equivalence".parse::<RelationshipKind>().unwrap(), EQ);
        assert_eq!("parent-child".parse::<RelationshipKind>().unwrap(), PC);
        assert!("sibling".parse::<RelationshipKind>().is_err());
        assert!(Concept::new(0, "   ").is_err());
    }
}
