//! Relationship inference over metadata concepts with a pairwise-plus-transitivity
//! Markov random field.
//!
//! Each unordered (equivalence) or ordered (parent-child) concept pair is a binary
//! variable. A unary factor carries the pair's prior belief; a ternary factor on
//! every concept triple forbids label combinations that break transitivity.
//! [`lbp_map`] decodes the most probable assignment with max-product loopy belief
//! propagation in the log domain.
//!
//! ```
//! use relmrf::{build_factor_graph, lbp_map, Concept, GraphMode, LbpConfig, Pair,
//!              PriorBelief, PriorTable, RelationshipKind, TernaryPotential};
//!
//! let kind = RelationshipKind::Equivalence;
//! let concepts: Vec<Concept> = ["zip", "zip code", "postal code"]
//!     .iter()
//!     .enumerate()
//!     .map(|(i, n)| Concept::new(i, *n).unwrap())
//!     .collect();
//! let mut priors = PriorTable::strict(kind);
//! priors.insert(Pair::new(0, 1), PriorBelief::new(0.9)?)?;
//! priors.insert(Pair::new(1, 2), PriorBelief::new(0.9)?)?;
//! priors.insert(Pair::new(0, 2), PriorBelief::new(0.4)?)?;
//! let potential = TernaryPotential::equivalence([1.0, 0.3, 0.3, 0.3, 0.9])?;
//! let graph = build_factor_graph(&concepts, &priors, &potential, &GraphMode::Dense)?;
//! let map = lbp_map(&graph, &LbpConfig::default())?;
//! // the weak (0, 2) prior gives way to the two strong links
//! assert_eq!(map.labels, vec![1, 1, 1]);
//! assert!(map.is_valid());
//! # Ok::<(), relmrf::Error>(())
//! ```

pub mod error;
pub mod eval;
pub mod graph;
pub mod inference;
pub mod io;
pub mod model;
pub mod partition;
pub mod priors;
pub mod tuning;

pub use error::{Error, Result};
pub use eval::{
    count_transitivity_violations, generate_synthetic, load_labels, prf1, prf1_pairs, CandidateMode, LabelMap,
    Metrics, Split, SyntheticConfig, SyntheticDataset, ViolationReport,
};
pub use graph::{build_factor_graph, count_graph_stats, enumerate_ternary_cliques, FactorGraph, GraphMode, GraphStats};
pub use inference::{
    exact_map_oracle, joint_log_score, lbp_map, lbp_map_observed, repair_assignment, violated_cliques, LbpConfig,
    MessageStore, ORACLE_MAX_VARIABLES,
};
pub use model::{
    variable_index, AssignmentGraph, Concept, InferenceStats, Pair, PriorBelief, RelationshipKind,
    RelationshipVariable, TernaryPotential, VariableSet,
};
pub use partition::{
    build_partitions, infer_partitions_parallel, top_k_neighbors, ConceptEmbedding, EmbeddingSet, Partition,
    PartitionConfig, PartitionedAssignment,
};
pub use priors::{
    calibrate_temperature, extract_features, load_external_priors, predict_prior, train_linear_prior, FeatureVector,
    LinearPriorModel, PriorTable, TrainConfig,
};
pub use tuning::{evaluate_config, tune, SearchSpace, TrialConfig, TrialRecord, TuneOptions, TuningReport};
