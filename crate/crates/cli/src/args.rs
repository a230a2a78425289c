use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "caevpr", version, about = "Compact place descriptors from CNN feature maps")]
pub struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the autoencoder on an FMAP file.
    Train(TrainArgs),
    /// Turn feature maps into unit-norm descriptors (DVEC).
    Encode(EncodeArgs),
    /// Rank references for every query by cosine similarity.
    Match(MatchArgs),
    /// Recall@K, precision–recall, AP and L2 histograms.
    Eval(EvalArgs),
    /// Build a ground-truth CSV.
    Gt(GtArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackboneArg {
    Vgg16,
    Alexnet,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LayerNormArg {
    PerSample,
    Frozen,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// Validation feature maps; omitted means no validation loss.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub backbone: BackboneArg,
    /// Three blocks as KHxKW/S or KHxKW/SHxSW, comma separated. Custom backbone only.
    #[arg(long, value_delimiter = ',')]
    pub blocks: Vec<String>,
    #[arg(long, default_value_t = 128)]
    pub d1: usize,
    #[arg(long, default_value_t = 128)]
    pub d2: usize,
    #[arg(long)]
    pub d3: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f32,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = LayerNormArg::PerSample)]
    pub layernorm: LayerNormArg,
    /// Also write a checkpoint every N epochs (0: final only).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub references: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ranked matches CSV from `caevpr match`.
    #[arg(long, required_unless_present_all = ["queries", "references"])]
    pub matches: Option<PathBuf>,
    /// Query descriptors; with --references, enables L2 histograms.
    #[arg(long, requires = "references")]
    pub queries: Option<PathBuf>,
    #[arg(long, requires = "queries")]
    pub references: Option<PathBuf>,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = caevpr::eval::DEFAULT_THRESHOLD_COUNT)]
    pub thresholds: usize,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Radius,
    Frames,
    Pairs,
}

#[derive(Debug, Args)]
pub struct GtArgs {
    #[arg(long, value_enum)]
    pub protocol: ProtocolArg,
    /// Query poses (radius) or manifest (frames).
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Reference poses (radius) or manifest (frames).
    #[arg(long)]
    pub references: Option<PathBuf>,
    #[arg(long, default_value_t = 25.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 2)]
    pub window: i64,
    /// Annotated query_id,ref_id pairs (pairs protocol).
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Query manifest: every listed id is declared, even without pairs.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}
