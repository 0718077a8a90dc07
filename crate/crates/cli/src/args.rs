use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ssfa", version, about = "Slow and steady feature analysis on frame sequences")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Plain `key = value` file supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for embedding and ranking.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate moving-shape clips and labeled stills.
    Synth(SynthArgs),
    /// Write the canonical datasets used by the experiments.
    Fixtures(FixturesArgs),
    /// Mine positive and negative pairs and triplets from clips.
    Mine(MineArgs),
    /// Train a feature network and classifier.
    Train(TrainArgs),
    /// Sequence completion: mean percentile rank of extrapolated frames.
    EvalSeqcomp(SeqcompArgs),
    /// Accuracy of the checkpoint's own linear classifier.
    EvalCls(ClsArgs),
    /// k-nearest-neighbor accuracy in feature space.
    EvalKnn(KnnArgs),
    /// Compare analytic loss gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Steady,
    Jerky,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Unreg,
    Sfa1,
    Sfa2,
    Ssfa,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    L2,
    L1,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TermArg {
    Softmax,
    Slowness,
    Steadiness,
    Total,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = Mode::Steady)]
    pub mode: Mode,
    #[arg(long, default_value_t = 40)]
    pub clips: usize,
    #[arg(long, default_value_t = 20)]
    pub clip_len: usize,
    #[arg(long, default_value_t = 16)]
    pub grid: usize,
    /// Pixels per frame along each compass direction.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    /// Labeled stills per shape class; 0 skips the labeled set.
    #[arg(long, default_value_t = 5)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    /// Clip manifest.
    #[arg(long)]
    pub clips: PathBuf,
    /// Temporal window in seconds.
    #[arg(long = "T", default_value_t = 2.0)]
    pub t: f64,
    #[arg(long, default_value_t = 3)]
    pub pair_neg_ratio: usize,
    #[arg(long, default_value_t = 1)]
    pub triplet_neg_ratio: usize,
    #[arg(long, default_value_t = 20000)]
    pub max_pairs: usize,
    #[arg(long, default_value_t = 20000)]
    pub max_triplets: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled manifest.
    #[arg(long)]
    pub labeled: PathBuf,
    /// Clip manifest the tuples refer to.
    #[arg(long)]
    pub clips: Option<PathBuf>,
    /// Tuple file written by `mine`.
    #[arg(long)]
    pub tuples: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Ssfa)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda2: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta_pair: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta_triplet: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_labeled: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_pairs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_triplets: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Choose lr, λ, λ′ and the triplet margin by staged validation search.
    #[arg(long)]
    pub cv: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SeqcompArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Clip manifest to draw queries from.
    #[arg(long)]
    pub clips: PathBuf,
    #[arg(long = "T", default_value_t = 2.0)]
    pub t: f64,
    #[arg(long, default_value_t = 200)]
    pub queries: usize,
    /// Extra random frames per represented clip.
    #[arg(long, default_value_t = 5)]
    pub pool_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClsArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labeled manifest to score.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KnnArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Score the training set against itself, leaving each item out.
    #[arg(long)]
    pub exclude_self: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, value_enum, default_value_t = MetricArg::L2)]
    pub metric: MetricArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, hide = true)]
    pub inject_sign_flip: Option<TermArg>,
    /// Directory for the report; printed only when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
