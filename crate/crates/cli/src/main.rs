//! `jcif`: dataset generation, two-stage training, archive compression,
//! indexing, querying and evaluation.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "jcif", version, about = "Joint learned image compression and hash-based indexing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-label dataset with a manifest
    GenData(GenDataArgs),
    /// Train the codec (stage 1) or the codec plus hashing head (stage 2)
    Train(TrainArgs),
    /// Compress a dataset split into an archive of bitstreams and hash codes
    Compress(CompressArgs),
    /// Reconstruct one archived image by id
    Decompress(DecompressArgs),
    /// Build a hash-table index from an archive's stored codes
    Index(IndexArgs),
    /// Rank the indexed images against one query image
    Query(QueryArgs),
    /// Compare decode-free retrieval with the decode-then-hash route
    Evaluate(EvaluateArgs),
    /// Measure rate and PSNR for a set of trained checkpoints
    RdCurve(RdCurveArgs),
}

#[derive(Args)]
pub struct GenDataArgs {
    /// output directory (manifest.csv plus images/)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// image side in pixels
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Tasks {
    /// L_p, L_b, L_c and L_C
    Four,
    /// the three hashing losses only
    Hashing,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub stage: u8,
    /// dataset directory written by gen-data
    #[arg(long)]
    pub data: PathBuf,
    /// stage-1 checkpoint to continue from (required for stage 2)
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// training log CSV; defaults to the checkpoint path with `.log.csv`
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// step budget of the requested stage
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// stage-2 learning-rate multiplier for the compression module
    #[arg(long, default_value_t = 0.1)]
    pub lr_factor: f64,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// dimensionless rate–distortion setting; λ = setting · 100 · H·W·C
    #[arg(long, default_value_t = 0.1)]
    pub lambda_setting: f64,
    /// explicit λ, overriding --lambda-setting
    #[arg(long)]
    pub lambda: Option<f64>,
    /// hash code length q
    #[arg(long, default_value_t = 64)]
    pub bits: usize,
    /// pairwise-loss scale (default 5/q)
    #[arg(long)]
    pub alpha: Option<f64>,
    /// soft-pair weight (default 0.1/q)
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum, default_value_t = Tasks::Four)]
    pub tasks: Tasks,
    #[arg(long, default_value_t = 500)]
    pub early_stop_window: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub early_stop_tolerance: f64,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Args)]
pub struct CompressArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// stage-2 checkpoint (codec plus hashing head)
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// which split becomes the archive
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
}

#[derive(Args)]
pub struct DecompressArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub id: u64,
    /// write the reconstruction as a tensor file
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// dataset directory, to report PSNR against the original
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// query image as a tensor file
    #[arg(long, conflicts_with = "id")]
    pub image: Option<PathBuf>,
    /// query by dataset id (needs --data)
    #[arg(long, requires = "data")]
    pub id: Option<u64>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// archive the index was built from, checked for agreement
    #[arg(long)]
    pub archive: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// archive of the gallery split
    #[arg(long)]
    pub archive: PathBuf,
    /// output directory for summary.csv and the per-query CSVs
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// relevance: images sharing a label, or label cosine at least this value
    #[arg(long)]
    pub min_cosine: Option<f64>,
}

#[derive(Args)]
pub struct RdCurveArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// one trained checkpoint per λ
    #[arg(long, num_args = 1.., required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Compress(a) => commands::compress(&a),
        Command::Decompress(a) => commands::decompress(&a),
        Command::Index(a) => commands::index(&a),
        Command::Query(a) => commands::query(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::RdCurve(a) => commands::rd_curve(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
