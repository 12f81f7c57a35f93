//! Partitioned inference for large, sparse candidate sets.
//!
//! Candidate pairs are grouped by their left concept (the anchor). Each group
//! becomes an independent local graph over the anchor, its candidate partners and
//! its top-k most similar concepts. A test pair belongs to exactly one partition,
//! the one anchored at its left concept; pairs pulled in only to close cliques
//! are auxiliary and never reported from that partition.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::FactorGraph;
use crate::inference::{lbp_map, LbpConfig};
use crate::io;
use crate::model::{Concept, InferenceStats, Pair, RelationshipKind, TernaryPotential, VariableSet};
use crate::priors::{PriorTable, DEFAULT_PRIOR};

/// An embedding vector for one concept.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptEmbedding {
    pub id: usize,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum UnitVector {
    Dense(Vec<f64>),
    /// Sorted by feature id.
    Sparse(Vec<(u32, f64)>),
}

impl UnitVector {
    fn dot(&self, other: &UnitVector) -> f64 {
        match (self, other) {
            (UnitVector::Dense(a), UnitVector::Dense(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            (UnitVector::Sparse(a), UnitVector::Sparse(b)) => {
                let (mut i, mut j, mut s) = (0, 0, 0.0);
                while i < a.len() && j < b.len() {
                    match a[i].0.cmp(&b[j].0) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            s += a[i].1 * b[j].1;
                            i += 1;
                            j += 1;
                        }
                    }
                }
                s
            }
            _ => unreachable!("an embedding set holds one vector representation"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingSource {
    External,
    TrigramTfidf,
}

/// L2-normalized concept vectors, so cosine similarity is a dot product.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    vectors: Vec<Option<UnitVector>>,
    source: EmbeddingSource,
}

impl EmbeddingSet {
    /// Validates and normalizes external embeddings for a vocabulary of `n_concepts`.
    ///
    /// All vectors must share one dimension and have a finite, nonzero norm.
    pub fn from_embeddings(n_concepts: usize, embeddings: Vec<ConceptEmbedding>) -> Result<Self> {
        let mut vectors = vec![None; n_concepts];
        let mut dim = None;
        for e in embeddings {
            if e.id >= n_concepts {
                return Err(Error::domain(format!("embedding for unknown concept {}", e.id)));
            }
            if *dim.get_or_insert(e.vector.len()) != e.vector.len() {
                return Err(Error::domain(format!(
                    "embedding for concept {} has dimension {}, expected {}",
                    e.id,
                    e.vector.len(),
                    dim.unwrap()
                )));
            }
            let norm = e.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::domain(format!("embedding for concept {} has norm {norm}", e.id)));
            }
            if vectors[e.id].is_some() {
                return Err(Error::domain(format!("duplicate embedding for concept {}", e.id)));
            }
            vectors[e.id] = Some(UnitVector::Dense(e.vector.iter().map(|x| x / norm).collect()));
        }
        Ok(EmbeddingSet {
            vectors,
            source: EmbeddingSource::External,
        })
    }

    /// Reads an embeddings CSV (`id,v0,v1,...`).
    pub fn load(path: &Path, n_concepts: usize) -> Result<Self> {
        let rows = io::read_embedding_rows(path)?;
        let mut embeddings = Vec::with_capacity(rows.len());
        let mut first_line = HashMap::new();
        for (line, id, vector) in rows {
            first_line.entry(id).or_insert(line);
            embeddings.push(ConceptEmbedding { id, vector });
        }
        Self::from_embeddings(n_concepts, embeddings).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })
    }

    /// Character-trigram TF-IDF vectors over concept names.
    ///
    /// Names are lowercased and padded with one space on each side, so every
    /// non-empty name yields at least one trigram. IDF is `ln((1+N)/(1+df)) + 1`.
    pub fn trigram_tfidf(concepts: &[Concept]) -> Self {
        let mut vocab: HashMap<String, u32> = HashMap::new();
        let mut docs: Vec<HashMap<u32, f64>> = Vec::with_capacity(concepts.len());
        for c in concepts {
            let padded: Vec<char> = format!(" {} ", c.name.trim().to_lowercase()).chars().collect();
            let mut tf: HashMap<u32, f64> = HashMap::new();
            for w in padded.windows(3) {
                let gram: String = w.iter().collect();
                let next = vocab.len() as u32;
                let id = *vocab.entry(gram).or_insert(next);
                *tf.entry(id).or_default() += 1.0;
            }
            docs.push(tf);
        }
        let mut df = vec![0usize; vocab.len()];
        for d in &docs {
            for &id in d.keys() {
                df[id as usize] += 1;
            }
        }
        let n = concepts.len() as f64;
        let vectors = docs
            .into_iter()
            .map(|d| {
                let mut v: Vec<(u32, f64)> = d
                    .into_iter()
                    .map(|(id, tf)| (id, tf * (((1.0 + n) / (1.0 + df[id as usize] as f64)).ln() + 1.0)))
                    .collect();
                v.sort_unstable_by_key(|&(id, _)| id);
                let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
                for (_, x) in &mut v {
                    *x /= norm;
                }
                Some(UnitVector::Sparse(v))
            })
            .collect();
        EmbeddingSet {
            vectors,
            source: EmbeddingSource::TrigramTfidf,
        }
    }

    /// External embeddings when they cover every concept, otherwise the trigram
    /// TF-IDF fallback.
    pub fn resolve(external: Option<EmbeddingSet>, concepts: &[Concept]) -> Self {
        match external {
            Some(e) if e.vectors.len() == concepts.len() && e.vectors.iter().all(Option::is_some) => e,
            Some(e) => {
                let missing = e.vectors.iter().filter(|v| v.is_none()).count();
                log::warn!(
                    "{missing} of {} concepts lack an embedding; using character-trigram TF-IDF vectors",
                    concepts.len()
                );
                Self::trigram_tfidf(concepts)
            }
            None => Self::trigram_tfidf(concepts),
        }
    }

    pub fn source(&self) -> EmbeddingSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.vectors.get(id).is_some_and(Option::is_some)
    }

    /// Cosine similarity, if both concepts are embedded.
    pub fn cosine(&self, a: usize, b: usize) -> Option<f64> {
        let va = self.vectors.get(a)?.as_ref()?;
        let vb = self.vectors.get(b)?.as_ref()?;
        Some(va.dot(vb))
    }
}

/// The `k` embedded concepts most similar to `concept` by cosine similarity,
/// excluding itself. Ties go to the lower id. A `k` at or above the number of
/// other embedded concepts is clipped.
pub fn top_k_neighbors(concept: usize, embeddings: &EmbeddingSet, k: usize) -> Result<Vec<usize>> {
    let Some(Some(query)) = embeddings.vectors.get(concept) else {
        return Err(Error::domain(format!("concept {concept} has no embedding")));
    };
    let mut scored: Vec<(f64, usize)> = embeddings
        .vectors
        .iter()
        .enumerate()
        .filter(|&(id, _)| id != concept)
        .filter_map(|(id, v)| v.as_ref().map(|v| (query.dot(v), id)))
        .collect();
    if k > scored.len() {
        log::warn!("k = {k} exceeds the {} other embedded concepts; clipping", scored.len());
    }
    let k = k.min(scored.len());
    let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k, order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(order);
    Ok(scored.into_iter().map(|(_, id)| id).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct PartitionConfig {
    /// Neighbors retrieved per anchor.
    pub k: usize,
    pub workers: usize,
    pub seed: u64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            k: 8,
            workers: 1,
            seed: 0,
        }
    }
}

/// One independent local graph.
#[derive(Debug, Clone)]
pub struct Partition {
    pub anchor: usize,
    /// Global concept id of each local concept id.
    pub concepts: Vec<usize>,
    /// All local variables as global pairs, in local variable order.
    pub member_pairs: Vec<Pair>,
    /// Global variable ids of the test pairs anchored here.
    pub test_global: Vec<usize>,
    /// Local variable ids of those test pairs, aligned with `test_global`.
    pub test_local: Vec<usize>,
    pub local_graph: FactorGraph,
}

/// Groups candidates by left concept and builds one local graph per group.
///
/// The local concept set is the anchor plus its `k` nearest neighbors, and the
/// anchor's candidate partners. Local variables are the anchor's candidate pairs
/// plus auxiliary pairs among the anchor and its neighbors: every such pair for
/// equivalence, and the candidate pairs between them for parent-child. Auxiliary
/// pairs without an explicit prior take the table default, or
/// [`DEFAULT_PRIOR`] for a strict table.
pub fn build_partitions(
    candidates: &VariableSet,
    priors: &PriorTable,
    embeddings: &EmbeddingSet,
    potential: &TernaryPotential,
    config: &PartitionConfig,
) -> Result<Vec<Partition>> {
    if candidates.is_empty() {
        return Err(Error::config("no candidate pairs to partition"));
    }
    if config.k == 0 {
        return Err(Error::config("k must be at least 1"));
    }
    let kind = candidates.kind();
    let mut by_left: Vec<Vec<usize>> = vec![Vec::new(); candidates.n_concepts()];
    for (id, p) in candidates.pairs().iter().enumerate() {
        by_left[p.left].push(id);
    }
    let fallback = priors
        .default_prior()
        .unwrap_or_else(|| crate::model::PriorBelief::new(DEFAULT_PRIOR).expect("valid default"));

    let anchors: Vec<usize> = (0..by_left.len()).filter(|&a| !by_left[a].is_empty()).collect();
    let build = |&anchor: &usize| -> Result<Partition> {
        let neighbors = top_k_neighbors(anchor, embeddings, config.k)?;
        let mut core: BTreeSet<usize> = neighbors.into_iter().collect();
        core.insert(anchor);

        let mut member_pairs: Vec<Pair> = by_left[anchor].iter().map(|&v| candidates.pair(v)).collect();
        let mut seen: BTreeSet<Pair> = member_pairs.iter().copied().collect();
        match kind {
            RelationshipKind::Equivalence => {
                for &x in &core {
                    for &y in core.range(x + 1..) {
                        let p = Pair::new(x, y);
                        if seen.insert(p) {
                            member_pairs.push(p);
                        }
                    }
                }
            }
            RelationshipKind::ParentChild => {
                for &x in core.iter().filter(|&&x| x != anchor) {
                    for &v in &by_left[x] {
                        let p = candidates.pair(v);
                        if core.contains(&p.right) && seen.insert(p) {
                            member_pairs.push(p);
                        }
                    }
                }
            }
        }

        let concepts: Vec<usize> = member_pairs
            .iter()
            .flat_map(|p| [p.left, p.right])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let local_of: HashMap<usize, usize> = concepts.iter().enumerate().map(|(l, &g)| (g, l)).collect();
        let local_pairs: Vec<Pair> = member_pairs
            .iter()
            .map(|p| Pair::new(local_of[&p.left], local_of[&p.right]))
            .collect();
        let vars = VariableSet::from_pairs(kind, concepts.len(), local_pairs.iter().copied())?;
        let mut local_priors = PriorTable::strict(kind);
        for (gp, lp) in member_pairs.iter().zip(&local_pairs) {
            local_priors.insert(*lp, priors.explicit(*gp).unwrap_or(fallback))?;
        }
        let local_graph = FactorGraph::build(&vars, &local_priors, potential)?;
        let n_test = by_left[anchor].len();
        Ok(Partition {
            anchor,
            concepts,
            member_pairs,
            test_global: by_left[anchor].clone(),
            test_local: (0..n_test).collect(),
            local_graph,
        })
    };

    anchors
        .par_iter()
        .map(build)
        .collect::<Vec<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Partition {
                partition: i,
                anchor: anchors[i],
                source: Box::new(e),
            })
        })
        .collect()
}

/// Per-partition summary of a partitioned run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionOutcome {
    pub partition: usize,
    pub anchor: usize,
    pub variables: usize,
    pub ternary_factors: usize,
    pub log_score: f64,
    pub violations: usize,
    pub stats: InferenceStats,
}

/// Labels for every candidate pair, merged from independent partitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionedAssignment {
    pub kind: RelationshipKind,
    /// Label per global candidate variable.
    pub labels: Vec<u8>,
    /// Belief margin per global candidate variable, from its anchor partition.
    pub margins: Vec<f64>,
    /// Sum of the local joint log scores.
    pub log_score: f64,
    /// Violated cliques summed over partitions.
    pub violations: usize,
    pub partitions: Vec<PartitionOutcome>,
}

impl PartitionedAssignment {
    pub fn converged(&self) -> bool {
        self.partitions.iter().all(|p| p.stats.converged)
    }

    pub fn max_iterations(&self) -> usize {
        self.partitions.iter().map(|p| p.stats.iterations).max().unwrap_or(0)
    }
}

/// Decodes every partition with [`lbp_map`] on a pool of `workers` threads and
/// merges test-pair labels in partition order. The result does not depend on
/// `workers`.
pub fn infer_partitions_parallel(
    partitions: &[Partition],
    lbp: &LbpConfig,
    workers: usize,
) -> Result<PartitionedAssignment> {
    lbp.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::WorkerPool(e.to_string()))?;
    let results: Vec<Result<_>> = pool.install(|| {
        partitions
            .par_iter()
            .map(|p| lbp_map(&p.local_graph, lbp))
            .collect()
    });

    let total: usize = partitions.iter().map(|p| p.test_global.len()).sum();
    let kind = partitions
        .first()
        .map_or(RelationshipKind::Equivalence, |p| p.local_graph.kind());
    let mut labels = vec![u8::MAX; total];
    let mut margins = vec![0.0; total];
    let mut outcomes = Vec::with_capacity(partitions.len());
    let mut log_score = 0.0;
    let mut violations = 0;
    for (i, (p, r)) in partitions.iter().zip(results).enumerate() {
        let a = r.map_err(|e| Error::Partition {
            partition: i,
            anchor: p.anchor,
            source: Box::new(e),
        })?;
        for (&g, &l) in p.test_global.iter().zip(&p.test_local) {
            if g >= total || labels[g] != u8::MAX {
                return Err(Error::Coverage(format!(
                    "pair {g} is claimed by more than one partition or out of range"
                )));
            }
            labels[g] = a.labels[l];
            margins[g] = a.margins[l];
        }
        log_score += a.log_score;
        violations += a.violations.len();
        outcomes.push(PartitionOutcome {
            partition: i,
            anchor: p.anchor,
            variables: p.local_graph.num_variables(),
            ternary_factors: p.local_graph.num_ternary(),
            log_score: a.log_score,
            violations: a.violations.len(),
            stats: a.stats,
        });
    }
    if labels.contains(&u8::MAX) {
        return Err(Error::Coverage("some candidate pairs belong to no partition".into()));
    }
    Ok(PartitionedAssignment {
        kind,
        labels,
        margins,
        log_score: crate::model::snap(log_score),
        violations,
        partitions: outcomes,
    })
}
