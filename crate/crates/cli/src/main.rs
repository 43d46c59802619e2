//! `nerd`: rate-distortion estimation and one-shot compression from the command line.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "nerd",
    version,
    about = "Rate-distortion estimation from samples and one-shot lossy compression"
)]
pub struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Closed-form R(D) of a Gaussian source, as a curve CSV.
    Oracle(OracleArgs),
    /// Blahut-Arimoto on the empirical distribution of a sample file.
    Ba(BaArgs),
    /// Train the neural estimator.
    #[command(subcommand)]
    Nerd(NerdCommand),
    /// Compress, decompress or evaluate with reverse channel coding.
    #[command(subcommand)]
    Rcc(RccCommand),
    /// Draw samples from a Gaussian source into a vector file.
    GenGaussian(GenArgs),
}

#[derive(Subcommand, Debug)]
pub enum NerdCommand {
    /// One model at one target distortion.
    Train(NerdArgs),
    /// One model per target distortion, plus the curve.
    Sweep(NerdArgs),
}

#[derive(Subcommand, Debug)]
pub enum RccCommand {
    /// Compress every row of a sample file into back-to-back messages.
    Encode(RccEncodeArgs),
    /// Reconstruct samples from a message file.
    Decode(RccDecodeArgs),
    /// Mean payload length and distortion over a sample file.
    Eval(RccEvalArgs),
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// Gaussian spec: a JSON file, or a preset `exp-decay:M` / `exp-square-decay:M`.
    #[arg(long)]
    pub spec: String,
    /// Comma-separated target distortions.
    #[arg(long, value_delimiter = ',', required = true)]
    pub d_targets: Vec<f64>,
    /// Output curve CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BaArgs {
    /// Sample file (NVEC or IDX).
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated slopes (β ≥ 0, multiplying −d).
    #[arg(long, value_delimiter = ',', conflicts_with = "d_targets")]
    pub betas: Vec<f64>,
    /// Comma-separated target distortions, in the data's original units.
    #[arg(long, value_delimiter = ',')]
    pub d_targets: Vec<f64>,
    /// Byte budget for the n×n working matrices.
    #[arg(long, default_value_t = nerd_core::blahut_arimoto::DEFAULT_MEMORY_BUDGET)]
    pub memory_budget: u64,
    /// Stop when the output marginal moves less than this (sup norm).
    #[arg(long, default_value_t = nerd_core::blahut_arimoto::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = nerd_core::blahut_arimoto::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Output curve CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    /// Softmax average over the whole batch block.
    Full,
    /// Diagonal-pairing batch estimator.
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preprocess {
    /// Use the values as loaded.
    None,
    /// Affine map of all values onto [0, 1]; distortions are reported in original units.
    UnitRange,
}

#[derive(Args, Debug)]
pub struct NerdArgs {
    /// Sample file (NVEC or IDX).
    #[arg(long)]
    pub data: PathBuf,
    /// Training settings, TOML or JSON. Flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated target distortions (exactly one for `train`).
    #[arg(long, value_delimiter = ',')]
    pub d_targets: Vec<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stabilizer added inside the log.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_enum)]
    pub beta_estimator: Option<EstimatorArg>,
    /// Parallel sweep points (only without warm starts).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Train every sweep point from a fresh initialization.
    #[arg(long)]
    pub no_warm_start: bool,
    #[arg(long, value_enum, default_value_t = Preprocess::None)]
    pub preprocess: Preprocess,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Pfr,
    Orc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ChannelArg {
    /// The rate-distortion achieving test channel.
    Optimal,
    /// Additive noise `Y = X + N(0, λ)`.
    Forward,
}

/// Where candidates come from: a trained generator, or a Gaussian source's
/// closed-form output distribution.
#[derive(Args, Debug)]
pub struct MarginalArgs {
    /// Generator checkpoint.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub checkpoint: Option<PathBuf>,
    /// Gaussian spec (JSON file or preset), used with `--d-target`.
    #[arg(long, requires = "d_target")]
    pub spec: Option<String>,
    /// Operating distortion for `--spec`.
    #[arg(long)]
    pub d_target: Option<f64>,
    #[arg(long, value_enum, default_value_t = ChannelArg::Optimal)]
    pub channel: ChannelArg,
}

#[derive(Args, Debug)]
pub struct CodecArgs {
    #[arg(long, value_enum, default_value_t = SchemeArg::Orc)]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = nerd_core::rcc::DEFAULT_NUM_CANDIDATES)]
    pub num_candidates: usize,
    /// Master seed; each sample gets its own seed drawn from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Slope in nats per distortion unit; defaults to the marginal's own.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// Zipf rate parameter in bits; defaults to the marginal's rate.
    #[arg(long)]
    pub rate_param: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RccEncodeArgs {
    #[command(flatten)]
    pub marginal: MarginalArgs,
    #[command(flatten)]
    pub codec: CodecArgs,
    /// Samples to compress.
    #[arg(long)]
    pub data: PathBuf,
    /// Output message file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RccDecodeArgs {
    #[command(flatten)]
    pub marginal: MarginalArgs,
    /// Message file from `rcc encode`.
    #[arg(long)]
    pub input: PathBuf,
    /// Output vector file of reconstructions.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RccEvalArgs {
    #[command(flatten)]
    pub marginal: MarginalArgs,
    #[command(flatten)]
    pub codec: CodecArgs,
    /// Test samples.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DtypeArg {
    F32,
    F64,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Gaussian spec: a JSON file, or a preset `exp-decay:M` / `exp-square-decay:M`.
    #[arg(long)]
    pub spec: String,
    /// Number of samples.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = DtypeArg::F32)]
    pub dtype: DtypeArg,
    /// Output vector file.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.kind.exit_code()
        }
    }
}
