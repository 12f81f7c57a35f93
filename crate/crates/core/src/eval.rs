//! Metrics, transitivity auditing and the synthetic benchmark generator.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::model::{
    config_index, is_forbidden, Concept, Pair, PriorBelief, RelationshipKind, VariableSet,
};
use crate::priors::PriorTable;

/// Gold or predicted labels keyed by canonical pair.
pub type LabelMap = BTreeMap<Pair, u8>;

/// Precision, recall and F1 of the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let mut zero_division = false;
        let mut ratio = |num: usize, den: usize| {
            if den == 0 {
                zero_division = true;
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            zero_division = true;
            0.0
        };
        Metrics {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            tn,
            zero_division,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Metrics over aligned label slices.
pub fn prf1(predicted: &[u8], gold: &[u8]) -> Result<Metrics> {
    if predicted.len() != gold.len() {
        return Err(Error::Coverage(format!(
            "{} predictions for {} gold labels",
            predicted.len(),
            gold.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &g) in predicted.iter().zip(gold) {
        match (p, g) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            (0, 0) => tn += 1,
            _ => return Err(Error::domain(format!("labels must be 0 or 1, got ({p}, {g})"))),
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_, tn))
}

/// Metrics over pair-keyed labels; both maps must cover the same pairs.
pub fn prf1_pairs(predicted: &LabelMap, gold: &LabelMap) -> Result<Metrics> {
    if predicted.len() != gold.len() || predicted.keys().zip(gold.keys()).any(|(a, b)| a != b) {
        let missing = gold.keys().find(|k| !predicted.contains_key(k));
        let extra = predicted.keys().find(|k| !gold.contains_key(k));
        return Err(Error::Coverage(format!(
            "{} predicted vs {} gold pairs (first missing: {}, first extra: {})",
            predicted.len(),
            gold.len(),
            missing.map_or("none".into(), |p| p.to_string()),
            extra.map_or("none".into(), |p| p.to_string()),
        )));
    }
    let p: Vec<u8> = predicted.values().copied().collect();
    let g: Vec<u8> = gold.values().copied().collect();
    prf1(&p, &g)
}

/// Reads a labels CSV, canonicalizing pairs for `kind`.
pub fn load_labels(path: &Path, n_concepts: usize, kind: RelationshipKind) -> Result<LabelMap> {
    let mut out = LabelMap::new();
    for row in io::read_label_rows(path)? {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: row.line,
            message,
        };
        let p = row.pair;
        if p.left >= n_concepts || p.right >= n_concepts || p.left == p.right {
            return Err(err(format!("invalid pair {p} for {n_concepts} concepts")));
        }
        if out.insert(p.canonical(kind), row.value).is_some() {
            return Err(err(format!("duplicate pair {p}")));
        }
    }
    Ok(out)
}

/// Result of a transitivity audit.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ViolationReport {
    pub count: usize,
    /// Indices into the clique list.
    pub cliques: Vec<usize>,
}

/// Counts cliques whose configuration is forbidden for `kind`, independently of
/// any potential table.
pub fn count_transitivity_violations(
    labels: &[u8],
    cliques: &[[usize; 3]],
    kind: RelationshipKind,
) -> ViolationReport {
    let bad: Vec<usize> = cliques
        .iter()
        .enumerate()
        .filter(|(_, c)| is_forbidden(kind, config_index(labels[c[0]], labels[c[1]], labels[c[2]])))
        .map(|(i, _)| i)
        .collect();
    ViolationReport {
        count: bad.len(),
        cliques: bad,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Which pairs become candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateMode {
    /// Every pair over the vocabulary.
    Dense,
    /// All gold positives plus `negatives_per_concept` random negatives drawn for
    /// each concept as left side.
    Sparse { negatives_per_concept: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub kind: RelationshipKind,
    pub n_concepts: usize,
    /// Equivalence: number of clusters. Parent-child: number of tree roots.
    pub n_clusters: usize,
    /// Parent-child only: deepest level below a root.
    pub max_depth: usize,
    /// Probability that a prior points at the wrong class, in `[0, 0.5]`.
    pub prior_noise: f64,
    pub candidates: CandidateMode,
    /// Train/validation fractions; the rest is test. Splits are stratified by class.
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn equivalence(n_concepts: usize, n_clusters: usize, prior_noise: f64, seed: u64) -> Self {
        SyntheticConfig {
            kind: RelationshipKind::Equivalence,
            n_concepts,
            n_clusters,
            max_depth: 3,
            prior_noise,
            candidates: CandidateMode::Dense,
            train_fraction: 0.5,
            validation_fraction: 0.25,
            seed,
        }
    }

    pub fn parent_child(n_concepts: usize, n_roots: usize, prior_noise: f64, seed: u64) -> Self {
        SyntheticConfig {
            kind: RelationshipKind::ParentChild,
            n_clusters: n_roots,
            ..Self::equivalence(n_concepts, n_roots, prior_noise, seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_concepts < 2 {
            return Err(Error::config("need at least 2 concepts"));
        }
        if self.n_clusters == 0 || self.n_clusters > self.n_concepts {
            return Err(Error::config(format!(
                "clusters/roots must be in 1..={}, got {}",
                self.n_concepts, self.n_clusters
            )));
        }
        if !(0.0..=0.5).contains(&self.prior_noise) {
            return Err(Error::config(format!("prior noise must be in [0, 0.5], got {}", self.prior_noise)));
        }
        let (tr, va) = (self.train_fraction, self.validation_fraction);
        if !(tr >= 0.0 && va >= 0.0 && tr + va <= 1.0) {
            return Err(Error::config("split fractions must be >= 0 and sum to at most 1"));
        }
        if self.kind == RelationshipKind::ParentChild && self.max_depth == 0 {
            return Err(Error::config("max_depth must be >= 1"));
        }
        Ok(())
    }
}

/// A generated benchmark. `pairs`, `gold`, `priors` and `splits` are aligned.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub concepts: Vec<Concept>,
    /// Candidate pairs, canonical for the relationship kind.
    pub pairs: Vec<Pair>,
    pub gold: Vec<u8>,
    /// `p_one` per pair.
    pub priors: Vec<f64>,
    pub splits: Vec<Split>,
}

impl SyntheticDataset {
    pub fn variable_set(&self) -> VariableSet {
        VariableSet::from_pairs(self.config.kind, self.concepts.len(), self.pairs.iter().copied())
            .expect("generated pairs are unique")
    }

    /// Priors for every candidate pair, with `default` for anything else.
    pub fn prior_table(&self, default: Option<f64>) -> PriorTable {
        let mut t = PriorTable::strict(self.config.kind);
        if let Some(d) = default {
            t.set_default(Some(PriorBelief::new(d).expect("default prior in [0, 1]")));
        }
        for (&p, &v) in self.pairs.iter().zip(&self.priors) {
            t.insert(p, PriorBelief::new(v).expect("generated prior in [0, 1]"))
                .expect("generated pairs are unique");
        }
        t
    }

    /// Indices of the pairs in `split`.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.pairs.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn gold_map(&self, split: Option<Split>) -> LabelMap {
        (0..self.pairs.len())
            .filter(|&i| split.is_none_or(|s| self.splits[i] == s))
            .map(|i| (self.pairs[i], self.gold[i]))
            .collect()
    }

    /// Prior argmax per pair.
    pub fn prior_labels(&self) -> Vec<u8> {
        self.priors
            .iter()
            .map(|&p| PriorBelief::new(p).expect("prior in [0, 1]").argmax())
            .collect()
    }

    /// Writes `concepts.csv`, `priors.csv`, `gold.csv`, `train.csv`,
    /// `validation.csv`, `test.csv` and `dataset.json` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        io::write_concepts(&dir.join("concepts.csv"), &self.concepts)?;
        io::write_priors(
            &dir.join("priors.csv"),
            self.pairs.iter().copied().zip(self.priors.iter().copied()),
        )?;
        io::write_labels(&dir.join("gold.csv"), self.pairs.iter().copied().zip(self.gold.iter().copied()))?;
        for (split, name) in [
            (Split::Train, "train.csv"),
            (Split::Validation, "validation.csv"),
            (Split::Test, "test.csv"),
        ] {
            let idx = self.indices(split);
            io::write_labels(&dir.join(name), idx.iter().map(|&i| (self.pairs[i], self.gold[i])))?;
        }
        let positives = self.gold.iter().filter(|&&g| g == 1).count();
        io::write_json(
            &dir.join("dataset.json"),
            &serde_json::json!({
                "config": self.config,
                "concepts": self.concepts.len(),
                "pairs": self.pairs.len(),
                "positives": positives,
                "splits": {
                    "train": self.indices(Split::Train).len(),
                    "validation": self.indices(Split::Validation).len(),
                    "test": self.indices(Split::Test).len(),
                },
            }),
        )
    }
}

const SYLLABLES: [&str; 40] = [
    "ka", "lo", "mi", "ran", "te", "vo", "su", "bel", "dra", "fen", "gi", "hol", "jun", "kes",
    "lum", "nor", "pa", "qui", "ros", "tal", "ur", "vin", "wex", "yol", "zar", "bro", "cen",
    "dul", "emo", "fis", "gar", "hin", "ist", "jor", "kul", "mar", "nep", "oru", "pil", "sed",
];

/// Distinct pseudo-words: the k-th word spells k in base 40 with at least two syllables.
fn pseudo_word(mut k: usize) -> String {
    let mut parts = Vec::new();
    loop {
        parts.push(SYLLABLES[k % SYLLABLES.len()]);
        k /= SYLLABLES.len();
        if k == 0 {
            break;
        }
    }
    if parts.len() < 2 {
        parts.push("ta");
    }
    parts.concat()
}

/// Hands out unique words in a seeded order.
struct WordSource {
    order: Vec<usize>,
    next: usize,
}

impl WordSource {
    fn new(count: usize, rng: &mut ChaCha8Rng) -> Self {
        // Skip 0..40 so every word has a real second syllable.
        let mut order: Vec<usize> = (SYLLABLES.len()..SYLLABLES.len() + count).collect();
        order.shuffle(rng);
        WordSource { order, next: 0 }
    }

    fn take(&mut self) -> String {
        let w = pseudo_word(self.order[self.next]);
        self.next += 1;
        w
    }
}

fn styled(tokens: &[&str], rng: &mut ChaCha8Rng) -> String {
    let sep = ["_", " ", "-"][rng.random_range(0..3)];
    let title = rng.random_bool(0.3);
    tokens
        .iter()
        .map(|t| {
            if title {
                let mut c = t.chars();
                c.next()
                    .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
                    .unwrap_or_default()
            } else {
                (*t).to_owned()
            }
        })
        .collect::<Vec<_>>()
        .join(sep)
}

/// Confidence in the gold state: Beta(8, 2) folded onto `(0.5, 1)`.
fn confidence(beta: &Beta<f64>, rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let c = beta.sample(rng);
        let c = c.max(1.0 - c);
        if c > 0.5 {
            return c;
        }
    }
}

/// Generates a seeded benchmark whose gold labels are transitive by construction.
///
/// Equivalence: concepts are split into clusters; names in a cluster share a
/// cluster-specific head word and draw modifiers from a cluster-specific pool, so
/// names of different clusters share no tokens. Parent-child: a random forest of
/// depth at most `max_depth`; a concept's name is the word path from its root and
/// gold holds for every ancestor/descendant pair.
///
/// Each prior points at the gold state with confidence drawn from Beta(8, 2)
/// (folded above 0.5); with probability `prior_noise` it points the other way
/// with the complementary confidence, i.e. Beta(2, 8) toward gold.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let (concepts, same_group): (Vec<Concept>, Box<dyn Fn(usize, usize) -> bool>) = match config.kind {
        RelationshipKind::Equivalence => {
            let (concepts, cluster) = equivalence_vocabulary(config, &mut rng);
            (concepts, Box::new(move |a, b| cluster[a] == cluster[b]))
        }
        RelationshipKind::ParentChild => {
            let (concepts, ancestors) = forest_vocabulary(config, &mut rng);
            (concepts, Box::new(move |a, b| ancestors[b].contains(&a)))
        }
    };

    let pairs = candidate_pairs(config, &same_group, &mut rng);
    let gold: Vec<u8> = pairs.iter().map(|p| u8::from(same_group(p.left, p.right))).collect();

    let beta = Beta::new(8.0, 2.0).expect("valid beta parameters");
    let priors: Vec<f64> = gold
        .iter()
        .map(|&g| {
            let c = confidence(&beta, &mut rng);
            let flipped = rng.random_bool(config.prior_noise);
            let toward_gold = if flipped { 1.0 - c } else { c };
            if g == 1 {
                toward_gold
            } else {
                1.0 - toward_gold
            }
        })
        .collect();

    let splits = stratified_splits(config, &gold, &mut rng);
    Ok(SyntheticDataset {
        config: config.clone(),
        concepts,
        pairs,
        gold,
        priors,
        splits,
    })
}

fn equivalence_vocabulary(config: &SyntheticConfig, rng: &mut ChaCha8Rng) -> (Vec<Concept>, Vec<usize>) {
    let n = config.n_concepts;
    let k = config.n_clusters;
    let mut cluster: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    cluster.shuffle(rng);

    let mut words = WordSource::new(k * 9, rng);
    let heads: Vec<String> = (0..k).map(|_| words.take()).collect();
    let modifiers: Vec<Vec<String>> = (0..k).map(|_| (0..3).map(|_| words.take()).collect()).collect();
    let values: Vec<Vec<String>> = (0..k).map(|_| (0..5).map(|_| words.take()).collect()).collect();

    let concepts = (0..n)
        .map(|id| {
            let c = cluster[id];
            let head = heads[c].as_str();
            let m = &modifiers[c];
            let pick = |rng: &mut ChaCha8Rng| m[rng.random_range(0..m.len())].as_str();
            let tokens: Vec<&str> = match rng.random_range(0..4) {
                0 => vec![head],
                1 => vec![head, pick(rng)],
                2 => vec![pick(rng), head],
                _ => vec![pick(rng), head, pick(rng)],
            };
            let name = styled(&tokens, rng);
            let mut vals: Vec<String> = values[c].choose_multiple(rng, 3).cloned().collect();
            vals.sort();
            Concept::with_values(id, name, vals).expect("generated names are non-empty")
        })
        .collect();
    (concepts, cluster)
}

fn forest_vocabulary(config: &SyntheticConfig, rng: &mut ChaCha8Rng) -> (Vec<Concept>, Vec<HashSet<usize>>) {
    let n = config.n_concepts;
    // Build in creation order, then relabel with a random permutation.
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut depth = vec![0usize; n];
    for i in config.n_clusters..n {
        let eligible: Vec<usize> = (0..i).filter(|&j| depth[j] < config.max_depth).collect();
        let p = eligible[rng.random_range(0..eligible.len())];
        parent[i] = Some(p);
        depth[i] = depth[p] + 1;
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);

    let mut words = WordSource::new(n, rng);
    let own: Vec<String> = (0..n).map(|_| words.take()).collect();
    let mut path_tokens: Vec<Vec<&str>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut t = parent[i].map(|p| path_tokens[p].clone()).unwrap_or_default();
        t.push(own[i].as_str());
        path_tokens.push(t);
    }

    let mut ancestors = vec![HashSet::new(); n];
    let mut concepts: Vec<Option<Concept>> = vec![None; n];
    for i in 0..n {
        let mut a = parent[i];
        while let Some(p) = a {
            ancestors[perm[i]].insert(perm[p]);
            a = parent[p];
        }
        let name = styled(&path_tokens[i], rng);
        concepts[perm[i]] = Some(Concept::new(perm[i], name).expect("generated names are non-empty"));
    }
    (concepts.into_iter().map(Option::unwrap).collect(), ancestors)
}

fn candidate_pairs(
    config: &SyntheticConfig,
    related: &dyn Fn(usize, usize) -> bool,
    rng: &mut ChaCha8Rng,
) -> Vec<Pair> {
    let n = config.n_concepts;
    let kind = config.kind;
    match config.candidates {
        CandidateMode::Dense => VariableSet::dense(kind, n).pairs().to_vec(),
        CandidateMode::Sparse { negatives_per_concept } => {
            let mut set = std::collections::BTreeSet::new();
            for a in 0..n {
                for b in 0..n {
                    if a != b && related(a, b) {
                        set.insert(Pair::new(a, b).canonical(kind));
                    }
                }
            }
            for a in 0..n {
                let mut drawn = 0;
                let mut attempts = 0;
                while drawn < negatives_per_concept && attempts < 20 * negatives_per_concept {
                    attempts += 1;
                    let b = rng.random_range(0..n);
                    if b == a || related(a, b) || related(b, a) {
                        continue;
                    }
                    if set.insert(Pair::new(a, b).canonical(kind)) {
                        drawn += 1;
                    }
                }
            }
            set.into_iter().collect()
        }
    }
}

fn stratified_splits(config: &SyntheticConfig, gold: &[u8], rng: &mut ChaCha8Rng) -> Vec<Split> {
    let mut splits = vec![Split::Test; gold.len()];
    for class in [1u8, 0] {
        let mut idx: Vec<usize> = (0..gold.len()).filter(|&i| gold[i] == class).collect();
        idx.shuffle(rng);
        let n_train = (idx.len() as f64 * config.train_fraction).round() as usize;
        let n_val = ((idx.len() as f64 * config.validation_fraction).round() as usize).min(idx.len() - n_train);
        for (pos, &i) in idx.iter().enumerate() {
            splits[i] = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
        }
    }
    splits
}
