mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use physnet_core::Error;

/// Dataset generation, training, prediction and experiments for voxel
/// deformation prediction.
#[derive(Parser, Debug)]
#[command(name = "physnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a dataset of undeformed/deformed voxel pairs.
    Generate(GenerateArgs),
    /// Train a model on a generated dataset.
    Train(TrainArgs),
    /// Predict the deformed shape of one grid or depth image.
    Predict(PredictArgs),
    /// Score a checkpoint on a dataset split.
    Evaluate(EvaluateArgs),
    /// Package a reconstructor and a deformation checkpoint as a cascade.
    Bundle(BundleArgs),
    /// Run a comparison experiment and plot its learning curves.
    Experiment(ExperimentArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Full3d,
    Partial,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Encoding {
    Real,
    OneHot,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// JSON config; its `generation` section describes the dataset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from a built-in desk dataset instead of a config file.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub encoding: Option<Encoding>,
    #[arg(long)]
    pub rotations: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace an existing dataset in the output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Physnet,
    Icgan,
    Reconstructor,
    DirectPartial,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "physnet")]
    pub variant: Variant,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub critic_steps: Option<usize>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Deformation checkpoint.
    #[arg(long, conflicts_with = "pipeline", required_unless_present = "pipeline")]
    pub model: Option<PathBuf>,
    /// Cascade bundle directory.
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    /// VXG1 grid or VXD1 depth image.
    #[arg(long)]
    pub input: PathBuf,
    /// Raw `E,nu,F,loc`: modulus in GPa, Poisson's ratio, force in newtons,
    /// location index.
    #[arg(long, allow_hyphen_values = true)]
    pub condition: String,
    /// Ground truth to score the prediction against.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    pub threshold: f64,
    /// Force range maximum; read from `condition.json` beside the model when omitted.
    #[arg(long)]
    pub force_max: Option<f64>,
    #[arg(long)]
    pub locations: Option<usize>,
    #[arg(long, value_enum)]
    pub encoding: Option<Encoding>,
    /// Sample the latent code with this seed instead of using its mean.
    #[arg(long)]
    pub sample_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 0.8)]
    pub threshold: f64,
}

#[derive(Args, Debug)]
pub struct BundleArgs {
    /// Omit for a bypass pipeline that treats inputs as complete.
    #[arg(long)]
    pub reconstructor: Option<PathBuf>,
    #[arg(long)]
    pub deformation: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub threshold: f64,
    /// Skip PCA alignment.
    #[arg(long)]
    pub no_align: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// One of: encoding_comparison, sampling_1xN_vs_KxK, location_encoding, partial_vs_cascaded.
    pub name: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Generate missing datasets first.
    #[arg(long)]
    pub autogen: bool,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

/// Usage and file-format problems exit with 2, everything else with 1.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Format(_) | Error::Config(_) | Error::Range(_) | Error::Parameter(_) | Error::Json(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Bundle(a) => commands::bundle(a),
        Command::Experiment(a) => commands::experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
