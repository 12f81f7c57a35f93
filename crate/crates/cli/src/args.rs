use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use relmrf::RelationshipKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "relmrf", version, about = "Infer consistent equivalence and parent-child relationships between concepts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode the most probable relationship assignment.
    Infer(InferArgs),
    /// Search potential and LBP parameters against labeled pairs.
    Tune(TuneArgs),
    /// Score predictions against gold labels.
    Eval(EvalArgs),
    /// Generate a synthetic benchmark.
    Synth(SynthArgs),
    /// Fit the string-similarity prior model and write priors.
    TrainPrior(TrainPriorArgs),
    /// Print closed-form graph sizes for a dense vocabulary.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Every pair over the vocabulary.
    Dense,
    /// Only the pairs listed in the priors file.
    Sparse,
    /// Listed pairs, split into independent local graphs.
    Partitioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    #[value(alias = "eq")]
    Equivalence,
    #[value(name = "parent-child", alias = "pc")]
    ParentChild,
}

impl From<KindArg> for RelationshipKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Equivalence => RelationshipKind::Equivalence,
            KindArg::ParentChild => RelationshipKind::ParentChild,
        }
    }
}

/// Flags shared by the inference-driven commands. Unset flags fall back to the
/// config file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long, value_enum)]
    pub relationship: Option<KindArg>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Neighbors per anchor in partitioned mode.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Greedily remove transitivity violations after decoding.
    #[arg(long)]
    pub repair: bool,
    /// TOML file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub concepts: PathBuf,
    /// Priors CSV; in sparse and partitioned modes its pairs are the candidates.
    #[arg(long)]
    pub priors: PathBuf,
    /// Prior for pairs missing from the priors file; without it they are an error.
    #[arg(long)]
    pub default_prior: Option<f64>,
    /// Free potential entries in table order, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub theta: Option<Vec<f64>>,
    /// Embeddings CSV for partitioned neighbor search.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Decode by exhaustive enumeration (small graphs only).
    #[arg(long)]
    pub exact: bool,
    /// Output JSON path; standard output if omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub concepts: PathBuf,
    #[arg(long)]
    pub priors: PathBuf,
    /// Labeled pairs to maximize F1 on.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub default_prior: Option<f64>,
    #[arg(long, default_value_t = 60)]
    pub budget: usize,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum, default_value = "equivalence")]
    pub relationship: KindArg,
    /// `infer` output JSON, or a labels CSV.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub concepts: PathBuf,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CandidatesArg {
    Dense,
    Sparse,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "equivalence")]
    pub relationship: KindArg,
    #[arg(long = "n-concepts", default_value_t = 60)]
    pub n_concepts: usize,
    /// Clusters (equivalence) or tree roots (parent-child).
    #[arg(long, default_value_t = 12)]
    pub clusters: usize,
    #[arg(long = "max-depth", default_value_t = 3)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 0.15)]
    pub noise: f64,
    #[arg(long, value_enum, default_value = "dense")]
    pub candidates: CandidatesArg,
    /// Random negatives per concept in sparse candidate mode.
    #[arg(long, default_value_t = 8)]
    pub negatives: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainPriorArgs {
    #[arg(long, value_enum, default_value = "equivalence")]
    pub relationship: KindArg,
    #[arg(long)]
    pub concepts: PathBuf,
    /// Training labels.
    #[arg(long)]
    pub labels: PathBuf,
    /// Calibration and reporting labels.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Pairs to write priors for (any `left_id,right_id,...` CSV); all pairs if omitted.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    /// Model and metrics JSON.
    #[arg(long)]
    pub model_out: PathBuf,
    /// Priors CSV for the requested pairs.
    #[arg(long)]
    pub priors_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long, value_enum, default_value = "equivalence")]
    pub relationship: KindArg,
    /// Number of concepts.
    #[arg(long = "n-concepts")]
    pub n_concepts: usize,
}
