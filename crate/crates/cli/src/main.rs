//! `klfilter`: fit, map, train and evaluate multilevel KL anomaly features.
//!
//! Exit status is 0 on success, 2 for invalid input or arguments and 1 for
//! runtime or numerical failures.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use klfilter::{FeatureMode, LoocvVariant};

#[derive(Debug, Parser)]
#[command(name = "klfilter", version, about = "Multilevel Karhunen-Loeve anomaly features with a linear SVM")]
pub struct Cli {
    /// Worker threads (default: all available cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the truncated eigenmodel of the nominal filter samples.
    Fit(FitArgs),
    /// Build the multilevel complement basis of an eigenmodel.
    Basis(BasisArgs),
    /// Map signals to multilevel detail coefficients.
    Map(MapArgs),
    /// Train a linear SVM on a feature CSV.
    Train(TrainArgs),
    /// Run one configured experiment.
    Eval(EvalArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Multilevel method and direct-SVM baseline side by side.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Label token of the nominal class.
    #[arg(long = "class-a", default_value = "A")]
    pub class_a: String,
    /// Label token of the anomalous class.
    #[arg(long = "class-b", default_value = "B")]
    pub class_b: String,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("truncation").args(["m", "energy_fraction"]).multiple(false)))]
pub struct TruncationArgs {
    /// Number of eigenmodes kept.
    #[arg(long)]
    pub m: Option<usize>,
    /// Keep the fewest modes carrying this fraction of the variance.
    #[arg(long = "energy-fraction")]
    pub energy_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Number of class-A samples used for the fit.
    #[arg(long)]
    pub nfilter: usize,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    /// Standardize with statistics of the filter samples first.
    #[arg(long)]
    pub standardize: bool,
    /// Where to write those statistics.
    #[arg(long = "standardizer-out", requires = "standardize")]
    pub standardizer_out: Option<PathBuf>,
    /// Shuffle seed for choosing the filter samples (default: file order).
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Relative rank tolerance for accepting deflated directions.
    #[arg(long = "rank-tol", default_value_t = klfilter::multilevel::DEFAULT_RANK_TOL)]
    pub rank_tol: f64,
    /// Also store every detail vector (O(p^2) space).
    #[arg(long = "explicit-psi")]
    pub explicit_psi: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    S0Only,
    AllLevels,
}

impl From<ModeArg> for FeatureMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::S0Only => FeatureMode::S0Only,
            ModeArg::AllLevels => FeatureMode::AllLevels,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LoocvArg {
    Standard,
    Paired,
}

impl From<LoocvArg> for LoocvVariant {
    fn from(v: LoocvArg) -> Self {
        match v {
            LoocvArg::Standard => LoocvVariant::Standard,
            LoocvArg::Paired => LoocvVariant::Paired,
        }
    }
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub basis: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "all-levels")]
    pub mode: ModeArg,
    /// Standardization statistics written by `fit --standardizer-out`.
    #[arg(long)]
    pub standardizer: Option<PathBuf>,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature CSV (`label,f1,..`) as written by `map`.
    #[arg(long)]
    pub features: PathBuf,
    /// Regularization (default 1/(2n)).
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = 10_000_000)]
    pub max_iter: usize,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Experiment configuration JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Also run the direct-SVM baseline.
    #[arg(long)]
    pub baseline: bool,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the generating model and anomalies.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub labels: LabelArgs,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Base configuration; the flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    pub nfilter: Option<usize>,
    #[command(flatten)]
    pub truncation: TruncationArgs,
    #[arg(long)]
    pub standardize: bool,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub loocv: Option<LoocvArg>,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors and 0 for --help/--version
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
