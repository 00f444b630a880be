//! `pclab`: dataset generation, mesh sampling, metric evaluation, and the
//! experiment drivers behind one binary. Every run derives all randomness
//! from `--seed` and writes a resolved-config snapshot next to its
//! artifacts, so a run can be reproduced from the output directory alone.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pclab_core::Error;

mod config;
mod eval;
mod experiment;
mod gen_data;
mod sample;
mod viz;

use config::{ProfileArg, Resolved};

#[derive(Parser)]
#[command(name = "pclab", version, about = "Point-cloud GAN sampling laboratory")]
pub struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Precedence: flag > config file >
/// profile default.
#[derive(Args, Clone, Default)]
pub struct CommonArgs {
    /// Output directory (default: $PCLAB_OUT or ./pclab-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; every random stream derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON file with config overrides.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Scale profile picking default sizes.
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,
    /// Refuse to run without an explicit seed (for CI).
    #[arg(long, global = true)]
    strict_seed: bool,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    cloud_lr: Option<f64>,
    #[arg(long, global = true)]
    n_critic: Option<usize>,
    #[arg(long, global = true)]
    snapshot_every: Option<usize>,
    #[arg(long, global = true)]
    sample_count: Option<usize>,
    #[arg(long, global = true)]
    latent: Option<usize>,
    /// Points per cloud.
    #[arg(long, global = true)]
    points: Option<usize>,
    /// Hidden-width multiplier for every network.
    #[arg(long, global = true)]
    width: Option<f64>,
    /// Neighbor count for edge convolutions.
    #[arg(long, global = true)]
    knn: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate procedural meshes and sampled point clouds.
    GenData(gen_data::GenDataArgs),
    /// Sample point clouds from a mesh file (OBJ or OFF).
    Sample(sample::SampleArgs),
    /// Export a density-colored PLY for an XYZ cloud.
    Viz(viz::VizArgs),
    /// Score a directory of generated clouds against a reference directory.
    Eval(eval::EvalArgs),
    /// Run one of the experiment drivers end to end.
    Experiment(experiment::ExperimentArgs),
    /// Pretrain the three feature extractors behind the Fréchet metrics.
    Pretrain(experiment::PretrainArgs),
}

fn run(cli: Cli) -> Result<(), Error> {
    let resolved = Resolved::from_args(&cli.common)?;
    match cli.command {
        Command::GenData(args) => gen_data::run(&args, &resolved),
        Command::Sample(args) => sample::run(&args, &resolved),
        Command::Viz(args) => viz::run(&args, &resolved),
        Command::Eval(args) => eval::run(&args, &resolved),
        Command::Experiment(args) => experiment::run(&args, &resolved),
        Command::Pretrain(args) => experiment::run_pretrain(&args, &resolved),
    }
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({"error": {"kind": kind, "message": message}}).to_string()
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::DegenerateCloud(_) => "degenerate-cloud",
        Error::EmptyInput(_) => "empty-input",
        Error::InvalidArgument(_) => "invalid-argument",
        Error::ZeroAreaMesh => "zero-area-mesh",
        Error::InvalidMesh(_) => "invalid-mesh",
        Error::ShapeMismatch { .. } => "shape-mismatch",
        Error::Numerical(_) => "numerical",
        Error::WeightMismatch(_) => "weight-mismatch",
        Error::Parse(_) => "parse",
        Error::Io(_) => "io",
        Error::Serde(_) => "serde",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{}", e);
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", error_json("usage", &e.to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(error_kind(&e), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
