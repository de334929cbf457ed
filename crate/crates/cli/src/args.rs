//! Command-line surface. Every tunable has a built-in default; a TOML
//! config file may override defaults, and explicit flags override both.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "hodep",
    version,
    about = "High-order graph-based dependency parser: biaffine scores transferred into a factor graph solved by consensus ADMM"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker pool size for per-sentence work (default: logical cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Increase log verbosity.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a CoNLL-U treebank.
    Train(TrainArgs),
    /// Parse a CoNLL-U file with a trained model.
    Parse(ParseArgs),
    /// Compare predicted and gold CoNLL-U files, printing corpus UAS.
    Eval(EvalArgs),
    /// Run the exact-oracle verification suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncoderArg {
    /// Bidirectional recurrent encoder (default).
    Birnn,
    /// Context window concatenation, cheap but context-poor.
    Window,
}

/// ADMM tunables shared by train and parse.
#[derive(Debug, Clone, Args)]
pub struct AdmmArgs {
    /// Quadratic penalty rho (default 1.0).
    #[arg(long)]
    pub rho: Option<f64>,

    /// Base multiplier step; the schedule is eta0/sqrt(t+1). Defaults to rho.
    #[arg(long)]
    pub eta0: Option<f64>,

    /// Primal residual threshold (default 1e-4).
    #[arg(long)]
    pub eps_primal: Option<f64>,

    /// Dual residual threshold (default 1e-4).
    #[arg(long)]
    pub eps_dual: Option<f64>,

    /// Iteration cap per solve (default 300).
    #[arg(long)]
    pub admm_max_iters: Option<usize>,

    /// Consensus rounding threshold in (0,1) (default 0.5).
    #[arg(long)]
    pub rounding_threshold: Option<f64>,
}

/// High-order inference tunables shared by train and parse.
#[derive(Debug, Clone, Args)]
pub struct HighOrderArgs {
    /// Couple the factor-graph/ADMM stage (true) or stay first-order (false, default).
    #[arg(long)]
    pub high_order: Option<bool>,

    /// Weight of the consensus perturbation on covered arcs (default 1.0).
    #[arg(long)]
    pub beta: Option<f64>,

    /// Split arc scores across covering slaves, theta / delta (default false).
    #[arg(long)]
    pub score_split: Option<bool>,

    /// Also build the mirrored backward slaves (default false).
    #[arg(long)]
    pub include_backward: Option<bool>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training treebank (CoNLL-U).
    #[arg(long)]
    pub train: PathBuf,

    /// Development treebank for per-epoch UAS (CoNLL-U).
    #[arg(long)]
    pub dev: Option<PathBuf>,

    /// Model checkpoint output path (written every epoch).
    #[arg(long, default_value = "model.hodep")]
    pub model: PathBuf,

    /// Vocabulary output path.
    #[arg(long, default_value = "vocab.hodep")]
    pub vocab: PathBuf,

    /// Comma-separated metrics output (one row per epoch).
    #[arg(long)]
    pub metrics: Option<PathBuf>,

    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Optimizer (default adam).
    #[arg(long)]
    pub optimizer: Option<OptimizerArg>,

    /// Learning rate (default 1e-3 for adam, 1e-2 for sgd).
    #[arg(long)]
    pub lr: Option<f64>,

    /// Training epochs (default 10).
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Batch size (default 5).
    #[arg(long)]
    pub batch: Option<usize>,

    /// Exclude training sentences longer than this (default 20).
    #[arg(long)]
    pub max_len: Option<usize>,

    /// First-order-only epochs before high-order inference engages (default 0).
    #[arg(long)]
    pub warm_start_epochs: Option<usize>,

    #[command(flatten)]
    pub high: HighOrderArgs,

    #[command(flatten)]
    pub admm: AdmmArgs,

    /// Encoder (default birnn).
    #[arg(long)]
    pub encoder: Option<EncoderArg>,

    /// Word embedding width (default 64).
    #[arg(long)]
    pub d_emb: Option<usize>,

    /// POS embedding width (default 16).
    #[arg(long)]
    pub d_pos: Option<usize>,

    /// Recurrent width per direction (default 64).
    #[arg(long)]
    pub d_hidden: Option<usize>,

    /// Arc MLP width (default 64).
    #[arg(long)]
    pub d_arc: Option<usize>,

    /// Words rarer than this map to the unknown token (default 2).
    #[arg(long)]
    pub min_count: Option<usize>,

    /// RNG seed for init and shuffling (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// Model checkpoint ("hodep-model v1").
    #[arg(long)]
    pub model: PathBuf,

    /// Vocabulary file ("hodep-vocab v1").
    #[arg(long)]
    pub vocab: PathBuf,

    /// Input treebank (CoNLL-U).
    #[arg(long)]
    pub input: PathBuf,

    /// Output path for the parsed CoNLL-U.
    #[arg(long)]
    pub output: PathBuf,

    #[command(flatten)]
    pub high: HighOrderArgs,

    #[command(flatten)]
    pub admm: AdmmArgs,

    /// Print each sentence's factor graph (slaves, arcs, delta).
    #[arg(long)]
    pub dump_factor_graph: bool,

    /// Print per-iteration ADMM rows as comma-separated lines.
    #[arg(long)]
    pub trace_admm: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Gold treebank (CoNLL-U).
    #[arg(long)]
    pub gold: PathBuf,

    /// Predicted treebank (CoNLL-U), aligned sentence-by-sentence.
    #[arg(long)]
    pub pred: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    All,
    Admm,
    Slave,
    Lbp,
    Logz,
    Gradient,
    Mst,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Which suite to run.
    #[arg(long, default_value = "all")]
    pub suite: SuiteArg,

    /// Scale factor on every suite's seed/case count.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
}
