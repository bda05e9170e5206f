//! The `d2s` command line. Every command prints one JSON report on stdout;
//! progress and errors go to stderr.

mod commands;
mod evaluate;

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use d2s_core::training::{ExpansionMode, OriginalTermGating};

use crate::error::Result;
use crate::formats::Split;

pub use evaluate::evaluate_files;

#[derive(Debug, Parser)]
#[command(name = "d2s", version, about = "Sparse lexical projections of frozen dense embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic caption/image corpus with planted topics.
    Synth(SynthArgs),
    /// Train a projection head on a dataset directory.
    Train(TrainArgs),
    /// Encode dense vectors into sparse vectors with a checkpoint.
    Project(ProjectArgs),
    /// Build an inverted index over sparse document vectors.
    Index(IndexArgs),
    /// Rank documents for each query and write a run file.
    Search(SearchArgs),
    /// Score run files, or a checkpoint on a dataset split.
    Evaluate(EvaluateArgs),
    /// Finite-difference checks of every backward pass.
    Gradcheck(GradcheckArgs),
}

fn parse_from_str<T>(s: &str) -> std::result::Result<T, String>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub images: Option<usize>,
    #[arg(long)]
    pub captions_per_image: Option<usize>,
    /// Dense vector dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Terms per caption.
    #[arg(long)]
    pub caption_len: Option<usize>,
    /// Gaussian noise scale on the dense vectors.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub topics: Option<usize>,
    #[arg(long)]
    pub valid_images: Option<usize>,
    #[arg(long)]
    pub test_images: Option<usize>,
    /// Replace existing files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory (as written by `synth`).
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch log as JSON lines.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Run manifest path [default: <out>.manifest.json].
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Target softmax temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Weight of the L1 term against the distillation loss, in [0, 1].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// L1 regularization strength.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seeds initialization, shuffling, and masking.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// controlled, caption_only, always_off, or always_on.
    #[arg(long, default_value = "controlled", value_parser = parse_from_str::<ExpansionMode>)]
    pub expansion_mode: ExpansionMode,
    /// keep_always or word_gated.
    #[arg(long, default_value = "keep_always", value_parser = parse_from_str::<OriginalTermGating>)]
    pub original_term_gating: OriginalTermGating,
    /// Hidden width of the projection head.
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    /// Initialize the output layer from the dataset's embedding table.
    #[arg(long)]
    pub init_from_embeddings: bool,
    /// Keep the epoch with the best validation MRR@10.
    #[arg(long)]
    pub select_best: bool,
    /// Train on ground-truth pairs instead of dense similarities.
    #[arg(long)]
    pub label_supervision: bool,
    /// L2-normalize dense vectors before computing targets.
    #[arg(long)]
    pub normalize_dense: bool,
    /// No per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dense vectors (D2SD).
    #[arg(long)]
    pub dense: PathBuf,
    /// Sparse vectors to write (D2SV).
    #[arg(long)]
    pub out: PathBuf,
    /// Keep only each caption's own terms (captions JSONL, matched by id),
    /// for models trained without caption expansion.
    #[arg(long)]
    pub restrict_terms: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Sparse document vectors (D2SV).
    #[arg(long)]
    pub docs: PathBuf,
    /// Index to write (D2SI).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Query vectors: D2SV, or D2SD with --dense.
    #[arg(long)]
    pub queries: PathBuf,
    /// Document vectors: D2SV, or D2SD with --dense. Supplies document ids.
    #[arg(long)]
    pub docs: PathBuf,
    /// Prebuilt index over --docs; built in memory when absent.
    #[arg(long, conflicts_with = "dense")]
    pub index: Option<PathBuf>,
    /// Run file to write (TSV).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    /// Exact inner-product search over dense vectors.
    #[arg(long, conflicts_with_all = ["maxscore", "oracle", "two_stage"])]
    pub dense: bool,
    /// MaxScore pruning (same results as exhaustive search).
    #[arg(long, conflicts_with_all = ["oracle", "two_stage"])]
    pub maxscore: bool,
    /// Brute-force scan of every document, bypassing the index.
    #[arg(long, conflicts_with = "two_stage")]
    pub oracle: bool,
    /// Retrieve with original caption terms, then rescore with the full query.
    #[arg(long, requires = "captions")]
    pub two_stage: bool,
    /// First-stage candidate count for --two-stage [default: 10 × k].
    #[arg(long, requires = "two_stage")]
    pub pool: Option<usize>,
    /// Captions JSONL giving each query's original terms.
    #[arg(long)]
    pub captions: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run file to score.
    #[arg(long, required_unless_present = "checkpoint", conflicts_with = "checkpoint")]
    pub run: Option<PathBuf>,
    #[arg(long, requires = "run")]
    pub qrels: Option<PathBuf>,
    /// Dense run for Pearson correlations and overlap@10.
    #[arg(long, requires = "run")]
    pub dense_run: Option<PathBuf>,
    /// Sparse query vectors for FLOPs and term fidelity.
    #[arg(long, requires = "run")]
    pub queries: Option<PathBuf>,
    /// Sparse document vectors for FLOPs.
    #[arg(long, requires = "queries")]
    pub docs: Option<PathBuf>,
    /// Captions JSONL for Exact@20, matched to --queries by id.
    #[arg(long, requires = "queries")]
    pub captions: Option<PathBuf>,
    /// Static embedding table for Semantic@20 (needs --captions).
    #[arg(long, requires = "captions")]
    pub embeddings: Option<PathBuf>,
    /// Evaluate this checkpoint end to end on --data instead of run files.
    #[arg(long, requires = "data")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "test", value_parser = parse_from_str::<Split>)]
    pub split: Split,
    /// Restrict caption encodings to their own terms (always_off models).
    #[arg(long)]
    pub restrict_captions: bool,
    /// Skip the dense baseline and the faithfulness measures.
    #[arg(long)]
    pub no_dense: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 8)]
    pub dense_dim: usize,
    #[arg(long, default_value_t = 5)]
    pub width: usize,
    #[arg(long, default_value_t = 17)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 3)]
    pub batch: usize,
    /// Perturb the analytic gradients; every check must then fail.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

/// A command's machine-readable report. `ok` is false when the command ran
/// but its checks failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: serde_json::Value,
    pub ok: bool,
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Project(a) => commands::project(a),
        Command::Index(a) => commands::index(a),
        Command::Search(a) => commands::search(a),
        Command::Evaluate(a) => evaluate::evaluate(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    }
}
