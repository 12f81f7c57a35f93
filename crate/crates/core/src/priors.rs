//! Prior beliefs per candidate pair.
//!
//! Priors either come from an external file (any upstream model can produce one)
//! or from a small logistic model over string-similarity features. The logistic
//! model supports class weighting and temperature scaling so that its outputs are
//! soft enough to let messages from other factors matter during inference.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::model::{Concept, Pair, PriorBelief, RelationshipKind, PRIOR_EPSILON};
use crate::partition::EmbeddingSet;

/// Prior for pairs that no file or model lists.
pub const DEFAULT_PRIOR: f64 = 0.01;

/// Q-gram length used for name similarity.
pub const QGRAM: usize = 3;

/// Priors keyed by canonical pair, with an optional fallback for unlisted pairs.
#[derive(Debug, Clone)]
pub struct PriorTable {
    kind: RelationshipKind,
    entries: HashMap<Pair, PriorBelief>,
    default: Option<PriorBelief>,
}

impl PriorTable {
    /// A table with no fallback: lookups of unlisted pairs fail.
    pub fn strict(kind: RelationshipKind) -> Self {
        PriorTable {
            kind,
            entries: HashMap::new(),
            default: None,
        }
    }

    /// A table whose unlisted pairs get `p_one`.
    ///
    /// # Panics
    ///
    /// If `p_one` is not a probability.
    pub fn with_default(kind: RelationshipKind, p_one: f64) -> Self {
        PriorTable {
            kind,
            entries: HashMap::new(),
            default: Some(PriorBelief::new(p_one).expect("default prior must be in [0, 1]")),
        }
    }

    pub fn kind(&self) -> RelationshipKind {
        self.kind
    }

    pub fn default_prior(&self) -> Option<PriorBelief> {
        self.default
    }

    pub fn set_default(&mut self, default: Option<PriorBelief>) {
        self.default = default;
    }

    /// Adds a prior; listing the same canonical pair twice is an error.
    pub fn insert(&mut self, pair: Pair, prior: PriorBelief) -> Result<()> {
        let key = pair.canonical(self.kind);
        if self.entries.insert(key, prior).is_some() {
            return Err(Error::domain(format!("duplicate prior for pair {key}")));
        }
        Ok(())
    }

    /// Explicit prior, falling back to the default.
    pub fn get(&self, pair: Pair) -> Option<PriorBelief> {
        self.explicit(pair).or(self.default)
    }

    pub fn explicit(&self, pair: Pair) -> Option<PriorBelief> {
        self.entries.get(&pair.canonical(self.kind)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Listed pairs in ascending order.
    pub fn pairs(&self) -> Vec<Pair> {
        let mut v: Vec<Pair> = self.entries.keys().copied().collect();
        v.sort_unstable();
        v
    }
}

/// Reads a priors CSV (`left_id,right_id,p_one`) against a vocabulary of
/// `n_concepts` concepts.
///
/// Probabilities are clamped to `[1e-6, 1 - 1e-6]`. Unlisted pairs resolve to
/// `default` (pass `None` for a strict table).
pub fn load_external_priors(
    path: &Path,
    n_concepts: usize,
    kind: RelationshipKind,
    default: Option<f64>,
) -> Result<PriorTable> {
    let rows = io::read_prior_rows(path)?;
    let parse_err = |line, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut table = PriorTable::strict(kind);
    if let Some(p) = default {
        table.default = Some(PriorBelief::new(p)?);
    }
    for row in rows {
        let Pair { left, right } = row.pair;
        if left >= n_concepts || right >= n_concepts {
            return Err(parse_err(
                row.line,
                format!("unknown concept id in pair ({left}, {right}); vocabulary has {n_concepts}"),
            ));
        }
        if left == right {
            return Err(parse_err(row.line, format!("self pair ({left}, {right})")));
        }
        let prior = PriorBelief::new(row.value).map_err(|e| parse_err(row.line, e.to_string()))?;
        table
            .insert(row.pair, prior)
            .map_err(|e| parse_err(row.line, e.to_string()))?;
    }
    Ok(table)
}

/// Observable evidence for one concept pair.
///
/// Every component is symmetric in the two concepts. Absent optional features
/// are imputed as 0 by [`FeatureVector::to_array`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Jaccard similarity of the character trigram sets of the lowercased names.
    pub qgram_similarity: f64,
    /// Jaccard similarity of the name token sets.
    pub token_jaccard: f64,
    /// `1 - levenshtein / max_len` over the lowercased names.
    pub edit_similarity: f64,
    pub word_count_ratio: f64,
    pub char_count_ratio: f64,
    /// Jaccard similarity of the value sets, when both concepts carry values.
    pub value_jaccard: Option<f64>,
    /// Cosine similarity of external embeddings, when both concepts have one.
    pub embedding_cosine: Option<f64>,
}

impl FeatureVector {
    pub const LEN: usize = 7;

    /// Feature names in [`to_array`](Self::to_array) order.
    pub const NAMES: [&'static str; 7] = [
        "qgram_similarity",
        "token_jaccard",
        "edit_similarity",
        "word_count_ratio",
        "char_count_ratio",
        "value_jaccard",
        "embedding_cosine",
    ];

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.qgram_similarity,
            self.token_jaccard,
            self.edit_similarity,
            self.word_count_ratio,
            self.char_count_ratio,
            self.value_jaccard.unwrap_or(0.0),
            self.embedding_cosine.unwrap_or(0.0),
        ]
    }
}

/// Lowercased tokens, split on whitespace and punctuation.
pub fn tokenize(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Character q-grams of `s`; strings shorter than `q` yield themselves.
pub fn qgrams(s: &str, q: usize) -> HashSet<String> {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() <= q {
        return std::iter::once(s.to_owned()).collect();
    }
    chars.windows(q).map(|w| w.iter().collect()).collect()
}

fn jaccard<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

fn count_ratio(a: usize, b: usize) -> f64 {
    let (a, b) = (a.max(1), b.max(1));
    a.min(b) as f64 / a.max(b) as f64
}

/// Name and value similarity features without embeddings.
pub fn extract_features(a: &Concept, b: &Concept) -> FeatureVector {
    extract_features_with(a, b, None)
}

/// As [`extract_features`], filling `embedding_cosine` from `embeddings` when
/// both concepts are embedded.
pub fn extract_features_with(
    a: &Concept,
    b: &Concept,
    embeddings: Option<&EmbeddingSet>,
) -> FeatureVector {
    let na = a.name.trim().to_lowercase();
    let nb = b.name.trim().to_lowercase();
    let ta = tokenize(&na);
    let tb = tokenize(&nb);
    let set_a: HashSet<&String> = ta.iter().collect();
    let set_b: HashSet<&String> = tb.iter().collect();
    let len_a = na.chars().count();
    let len_b = nb.chars().count();
    let max_len = len_a.max(len_b).max(1);
    let edit = strsim::levenshtein(&na, &nb);

    let value_jaccard = if a.values.is_empty() || b.values.is_empty() {
        None
    } else {
        let va: HashSet<String> = a.values.iter().map(|v| v.trim().to_lowercase()).collect();
        let vb: HashSet<String> = b.values.iter().map(|v| v.trim().to_lowercase()).collect();
        Some(jaccard(&va, &vb))
    };

    FeatureVector {
        qgram_similarity: jaccard(&qgrams(&na, QGRAM), &qgrams(&nb, QGRAM)),
        token_jaccard: jaccard(&set_a, &set_b),
        edit_similarity: 1.0 - edit as f64 / max_len as f64,
        word_count_ratio: count_ratio(ta.len(), tb.len()),
        char_count_ratio: count_ratio(len_a, len_b),
        value_jaccard,
        embedding_cosine: embeddings
            .and_then(|e| e.cosine(a.id, b.id))
            .map(|c| c.clamp(-1.0, 1.0)),
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic prior model with temperature scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPriorModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub temperature: f64,
}

impl LinearPriorModel {
    /// Raw logit `w·x + b`, before temperature.
    pub fn logit(&self, features: &FeatureVector) -> f64 {
        self.raw_logit(&features.to_array())
    }

    fn raw_logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    /// `sigmoid(logit / temperature)` without clamping.
    pub fn probability(&self, features: &FeatureVector) -> f64 {
        sigmoid(self.logit(features) / self.temperature)
    }

    /// Negative log-likelihood of labeled examples at a given temperature.
    pub fn nll_at(&self, examples: &[(FeatureVector, u8)], temperature: f64) -> f64 {
        examples
            .iter()
            .map(|(f, y)| {
                let z = self.logit(f) / temperature;
                if *y == 1 {
                    softplus(-z)
                } else {
                    softplus(z)
                }
            })
            .sum()
    }
}

/// Clamped prior from a model.
pub fn predict_prior(model: &LinearPriorModel, features: &FeatureVector) -> PriorBelief {
    let p = model
        .probability(features)
        .clamp(PRIOR_EPSILON, 1.0 - PRIOR_EPSILON);
    PriorBelief::new(p).expect("sigmoid output is a probability")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Weight each class inversely to its frequency.
    pub class_weighting: bool,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            epochs: 2000,
            class_weighting: true,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Fits a logistic model by full-batch gradient descent.
pub fn train_linear_prior(
    examples: &[(FeatureVector, u8)],
    config: &TrainConfig,
) -> Result<LinearPriorModel> {
    train_with_history(examples, config).map(|(m, _)| m)
}

/// As [`train_linear_prior`], also returning the training loss before each epoch
/// and after the last one.
///
/// The loss is the (class-weighted) mean log-loss plus `l2/2 ||w||²`. Inputs lie
/// in `[-1, 1]`, so the gradient is 2-Lipschitz and any learning rate below 1
/// gives a non-increasing loss.
pub fn train_with_history(
    examples: &[(FeatureVector, u8)],
    config: &TrainConfig,
) -> Result<(LinearPriorModel, Vec<f64>)> {
    let positives = examples.iter().filter(|(_, y)| *y == 1).count();
    let negatives = examples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::config(format!(
            "training needs both classes, got {positives} positive and {negatives} negative"
        )));
    }
    if examples.iter().any(|(_, y)| *y > 1) {
        return Err(Error::config("labels must be 0 or 1"));
    }
    if !(config.learning_rate > 0.0) || !(config.l2 >= 0.0) {
        return Err(Error::config("learning rate must be > 0 and l2 >= 0"));
    }
    let xs: Vec<[f64; 7]> = examples.iter().map(|(f, _)| f.to_array()).collect();
    if xs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::config("features must be finite"));
    }
    let ys: Vec<f64> = examples.iter().map(|(_, y)| f64::from(*y)).collect();
    let (w_pos, w_neg) = if config.class_weighting {
        let n = examples.len() as f64;
        (n / (2.0 * positives as f64), n / (2.0 * negatives as f64))
    } else {
        (1.0, 1.0)
    };
    let sample_w: Vec<f64> = ys.iter().map(|&y| if y > 0.5 { w_pos } else { w_neg }).collect();
    let total_w: f64 = sample_w.iter().sum();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights: Vec<f64> = (0..FeatureVector::LEN)
        .map(|_| rng.random_range(-0.01..0.01))
        .collect();
    let mut bias = 0.0;

    let loss = |weights: &[f64], bias: f64| -> f64 {
        let data: f64 = xs
            .iter()
            .zip(&ys)
            .zip(&sample_w)
            .map(|((x, &y), &sw)| {
                let z = dot(weights, x) + bias;
                sw * if y > 0.5 { softplus(-z) } else { softplus(z) }
            })
            .sum::<f64>()
            / total_w;
        data + 0.5 * config.l2 * weights.iter().map(|w| w * w).sum::<f64>()
    };

    let mut history = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        history.push(loss(&weights, bias));
        let mut grad = [0.0; 7];
        let mut grad_b = 0.0;
        for ((x, &y), &sw) in xs.iter().zip(&ys).zip(&sample_w) {
            let err = sw * (sigmoid(dot(&weights, x) + bias) - y);
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += err * xi;
            }
            grad_b += err;
        }
        for (w, g) in weights.iter_mut().zip(grad) {
            *w -= config.learning_rate * (g / total_w + config.l2 * *w);
        }
        bias -= config.learning_rate * grad_b / total_w;
    }
    history.push(loss(&weights, bias));

    Ok((
        LinearPriorModel {
            weights,
            bias,
            temperature: 1.0,
        },
        history,
    ))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Picks the grid temperature with the lowest validation NLL; ties go to the
/// earlier grid entry. Weights are unchanged.
pub fn calibrate_temperature(
    model: &LinearPriorModel,
    validation: &[(FeatureVector, u8)],
    grid: &[f64],
) -> Result<LinearPriorModel> {
    if grid.is_empty() {
        return Err(Error::config("temperature grid is empty"));
    }
    if validation.is_empty() {
        return Err(Error::config("validation set is empty"));
    }
    if let Some(t) = grid.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::config(format!("temperatures must be > 0, got {t}")));
    }
    let mut best = (f64::INFINITY, grid[0]);
    for &t in grid {
        let nll = model.nll_at(validation, t);
        if nll < best.0 {
            best = (nll, t);
        }
    }
    Ok(LinearPriorModel {
        temperature: best.1,
        ..model.clone()
    })
}

/// Default temperature grid for calibration.
pub fn default_temperature_grid() -> Vec<f64> {
    vec![0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const EQ: RelationshipKind = RelationshipKind::Equivalence;

    fn concept(id: usize, name: &str) -> Concept {
        Concept::new(id, name).unwrap()
    }

    fn feat(x: f64) -> FeatureVector {
        FeatureVector {
            qgram_similarity: x,
            token_jaccard: 0.0,
            edit_similarity: 0.0,
            word_count_ratio: 0.0,
            char_count_ratio: 0.0,
            value_jaccard: None,
            embedding_cosine: None,
        }
    }

    #[test]
    fn identical_names() {
        let f = extract_features(&concept(0, "music artist"), &concept(1, "music artist"));
        assert_eq!(f.qgram_similarity, 1.0);
        assert_eq!(f.token_jaccard, 1.0);
        assert_eq!(f.edit_similarity, 1.0);
        assert_eq!(f.word_count_ratio, 1.0);
        assert_eq!(f.char_count_ratio, 1.0);
        assert_eq!(f.value_jaccard, None);
        assert_eq!(f.embedding_cosine, None);
    }

    #[test]
    fn near_duplicate_names() {
        let f = extract_features(&concept(0, "music artist"), &concept(1, "musical artist"));
        // {music, artist} vs {musical, artist}
        assert!((f.token_jaccard - 1.0 / 3.0).abs() < 1e-12);
        // two insertions over 14 characters
        assert!((f.edit_similarity - (1.0 - 2.0 / 14.0)).abs() < 1e-12);
        assert!((f.char_count_ratio - 12.0 / 14.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_tokens() {
        let f = extract_features(&concept(0, "zip code"), &concept(1, "latitude"));
        assert_eq!(f.token_jaccard, 0.0);
        assert_eq!(f.word_count_ratio, 0.5);
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(tokenize("Zip_Code (US)"), vec!["zip", "code", "us"]);
    }

    #[test]
    fn values_feature() {
        let a = Concept::with_values(0, "a", vec!["x".into(), "y".into()]).unwrap();
        let b = Concept::with_values(1, "b", vec!["Y".into(), "z".into()]).unwrap();
        assert!((extract_features(&a, &b).value_jaccard.unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn predict_examples() {
        let model = LinearPriorModel {
            weights: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            bias: 0.0,
            temperature: 3.0,
        };
        assert_eq!(predict_prior(&model, &feat(0.0)).p_one(), 0.5);
        let m1 = LinearPriorModel {
            weights: vec![0.0; 7],
            bias: 4.0,
            temperature: 1.0,
        };
        let expected = 1.0 / (1.0 + (-4.0f64).exp());
        assert!((predict_prior(&m1, &feat(0.0)).p_one() - expected).abs() < 1e-12);
        assert!((expected - 0.982).abs() < 1e-3);
        let m4 = LinearPriorModel {
            temperature: 4.0,
            ..m1
        };
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((predict_prior(&m4, &feat(0.0)).p_one() - expected).abs() < 1e-12);
        assert!((expected - 0.731).abs() < 1e-3);
    }

    #[test]
    fn predictions_are_clamped() {
        let m = LinearPriorModel {
            weights: vec![0.0; 7],
            bias: 100.0,
            temperature: 1.0,
        };
        assert_eq!(predict_prior(&m, &feat(0.0)).p_one(), 1.0 - PRIOR_EPSILON);
    }

    #[test]
    fn separable_training() {
        let mut data = Vec::new();
        for i in 0..20 {
            data.push((feat(1.0), 1));
            data.push((feat(0.0), 0));
            if i % 3 == 0 {
                data.push((feat(0.0), 0));
            }
        }
        let (model, history) = train_with_history(&data, &TrainConfig::default()).unwrap();
        let acc = data
            .iter()
            .filter(|(f, y)| predict_prior(&model, f).argmax() == *y)
            .count();
        assert_eq!(acc, data.len());
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn uninformative_features_give_class_prior() {
        let mut data = Vec::new();
        for i in 0..40 {
            data.push((feat(0.0), u8::from(i < 10)));
        }
        let config = TrainConfig {
            class_weighting: false,
            l2: 0.0,
            epochs: 5000,
            ..TrainConfig::default()
        };
        let model = train_linear_prior(&data, &config).unwrap();
        assert!((predict_prior(&model, &feat(0.0)).p_one() - 0.25).abs() < 1e-3);
    }

    #[test]
    fn single_class_rejected() {
        let data = vec![(feat(1.0), 1), (feat(0.5), 1)];
        assert!(matches!(
            train_linear_prior(&data, &TrainConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<_> = (0..30).map(|i| (feat(i as f64 / 30.0), u8::from(i % 4 == 0))).collect();
        let c = TrainConfig {
            epochs: 200,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train_linear_prior(&data, &c).unwrap();
        let b = train_linear_prior(&data, &c).unwrap();
        assert_eq!(a, b);
        assert!(a.weights.iter().zip(&b.weights).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn calibrated_model_keeps_unit_temperature() {
        // Labels drawn so that the empirical frequency at each logit equals sigmoid(logit).
        let model = LinearPriorModel {
            weights: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            bias: 0.0,
            temperature: 1.0,
        };
        let mut val = Vec::new();
        for (logit, pos, total) in [(0.0, 50, 100), (2.0f64.ln(), 200, 300), (-(3.0f64).ln(), 25, 100)] {
            for i in 0..total {
                val.push((feat(logit), u8::from(i < pos)));
            }
        }
        let cal = calibrate_temperature(&model, &val, &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(cal.temperature, 1.0);
    }

    #[test]
    fn overconfident_model_gets_softened() {
        let model = LinearPriorModel {
            weights: vec![10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            bias: -5.0,
            temperature: 1.0,
        };
        // logits are +-5 => probabilities >= 0.993 toward the predicted class, but
        // only 50% of predictions are right.
        let mut val = Vec::new();
        for i in 0..100 {
            val.push((feat(f64::from(u8::from(i % 2 == 0))), u8::from(i % 4 < 2)));
        }
        let nll1 = model.nll_at(&val, 1.0);
        let nll8 = model.nll_at(&val, 8.0);
        assert!(nll8 < nll1);
        let cal = calibrate_temperature(&model, &val, &[1.0, 2.0, 4.0, 8.0]).unwrap();
        assert!(cal.temperature > 1.0);
        assert_eq!(cal.weights, model.weights);
        assert!(calibrate_temperature(&model, &val, &[]).is_err());
    }

    #[test]
    fn temperature_preserves_argmax() {
        let model = LinearPriorModel {
            weights: vec![3.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            bias: -1.2,
            temperature: 1.0,
        };
        for i in 0..50 {
            let f = feat(i as f64 / 49.0);
            let base = predict_prior(&model, &f).argmax();
            for t in [0.3, 1.0, 2.0, 7.5] {
                let m = LinearPriorModel {
                    temperature: t,
                    ..model.clone()
                };
                assert_eq!(predict_prior(&m, &f).argmax(), base);
            }
        }
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_priors_direct_and_clamped() {
        let f = write_tmp("left_id,right_id,p_one\n0,1,0.9\n1,2,1.0\n");
        let t = load_external_priors(f.path(), 3, EQ, Some(DEFAULT_PRIOR)).unwrap();
        assert_eq!(t.get(Pair::new(0, 1)).unwrap().p_one(), 0.9);
        assert_eq!(t.get(Pair::new(2, 1)).unwrap().p_one(), 1.0 - 1e-6);
        assert_eq!(t.get(Pair::new(0, 2)).unwrap().p_one(), DEFAULT_PRIOR);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn load_priors_errors() {
        let dup = write_tmp("left_id,right_id,p_one\n0,1,0.9\n1,0,0.2\n");
        let err = load_external_priors(dup.path(), 3, EQ, None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        // the same rows are distinct variables under parent-child
        assert!(load_external_priors(dup.path(), 3, RelationshipKind::ParentChild, None).is_ok());

        let unknown = write_tmp("left_id,right_id,p_one\n0,7,0.9\n");
        assert!(load_external_priors(unknown.path(), 3, EQ, None).is_err());
        let range = write_tmp("left_id,right_id,p_one\n0,1,1.5\n");
        assert!(load_external_priors(range.path(), 3, EQ, None).is_err());
        let malformed = write_tmp("left_id,right_id,p_one\n0,x,0.5\n");
        assert!(matches!(
            load_external_priors(malformed.path(), 3, EQ, None),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
