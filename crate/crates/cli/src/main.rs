mod commands;

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Coarse lattice simulation to detailed surface super-resolution.
#[derive(Parser, Debug)]
#[command(name = "simsr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic paired dataset.
    Datagen(DatagenArgs),
    /// Build the geodesic neighbourhood table of a dataset.
    Precompute(PrecomputeArgs),
    /// Train the super-resolution network.
    Train(TrainArgs),
    /// Predict surface displacements with a trained network.
    Infer(InferArgs),
    /// Compare predicted and target frame containers.
    Eval(EvalArgs),
    /// Run a comparison method on the test frames.
    Baseline(BaselineArgs),
    /// Time inference of a trained network.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct DatagenArgs {
    /// Generator config (`key = value` lines); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PrecomputeArgs {
    /// Dataset directory or manifest file.
    #[arg(long)]
    data: PathBuf,
    /// Neighbours kept per surface vertex.
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Output path; defaults to the table path named in the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Model settings shared by every command that trains a network.
#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Model config (`key = value` lines); defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k_interp: Option<usize>,
    #[arg(long)]
    k_graph: Option<usize>,
    #[arg(long)]
    beta_max: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Directory receiving the model, its config and the loss log.
    #[arg(long)]
    out: PathBuf,
    /// full, no-fe or no-cu.
    #[arg(long)]
    variant: Option<String>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Split {
    Train,
    Test,
    All,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Perturbation {
    None,
    Dynamics,
    Force,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    data: PathBuf,
    /// Directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    frames: Split,
    /// Output frame container.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Perturbation::None)]
    perturb: Perturbation,
    /// Peak offset of the dynamics perturbation or pull of the force, mm.
    #[arg(long, default_value_t = 3.0)]
    magnitude: f64,
    /// Sway period of the dynamics perturbation, frames.
    #[arg(long, default_value_t = 20.0)]
    period: f64,
    /// Force site as `x,y,z`; the lattice centre when omitted.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    site: Option<Vec<f64>>,
    /// Force direction as `x,y,z`.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 0.0, 1.0])]
    direction: Vec<f64>,
    /// Force width, mm.
    #[arg(long, default_value_t = 15.0)]
    radius: f64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Container with predicted surface displacements.
    #[arg(long)]
    pred: PathBuf,
    /// Container with target surface displacements.
    #[arg(long)]
    target: PathBuf,
    #[arg(long, default_value = "model")]
    method: String,
    /// Per-frame CSV output.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Heatmap PLY of one frame's errors; needs `--surface`.
    #[arg(long)]
    heatmap: Option<PathBuf>,
    #[arg(long)]
    surface: Option<PathBuf>,
    /// Frame shown in the heatmap; the first evaluated frame by default.
    #[arg(long)]
    heatmap_frame: Option<u32>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum BasisArg {
    Univariate,
    Trivariate,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long)]
    data: PathBuf,
    /// embedded, rbf, mls, bvae, no-fe or no-cu.
    #[arg(long)]
    method: String,
    /// Kernel width for rbf and mls, mm; median centre spacing by default.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_enum, default_value_t = BasisArg::Univariate)]
    mls_basis: BasisArg,
    #[arg(long, default_value_t = 2)]
    mls_degree: usize,
    /// Directory for predictions and statistics.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[arg(long, default_value_t = 5)]
    warmup: usize,
    /// Reuse interpolation weights across frames instead of recomputing them.
    #[arg(long)]
    cached_weights: bool,
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("SIMSR_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("SIMSR_THREADS must be a thread count, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    init_threads()?;
    match cli.command {
        Command::Datagen(a) => commands::datagen(a),
        Command::Precompute(a) => commands::precompute(a),
        Command::Train(a) => commands::train(a),
        Command::Infer(a) => commands::infer(a),
        Command::Eval(a) => commands::eval(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Bench(a) => commands::bench(a),
    }
}
