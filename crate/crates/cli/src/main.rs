//! `rpsgmm` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "rpsgmm",
    version,
    about = "Phase-space GMM classification of lake time series"
)]
struct Cli {
    /// Seed for k-means, EM and synthesis [default: 42; synth uses the seed in its --spec file]
    #[arg(long, global = true, env = "RPSGMM_SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn raw observations into daily hv_anom / p_water series
    Preprocess(PreprocessArgs),
    /// Fit one mixture per class on its representative series
    Train(TrainArgs),
    /// Predict labels and report per-class log-likelihoods
    Classify(ClassifyArgs),
    /// Search (tau, d) and tabulate accuracy
    GridSearch(GridArgs),
    /// Score a trained bundle on labeled data
    Evaluate(EvaluateArgs),
    /// Generate a synthetic labeled dataset
    Synth(SynthArgs),
    /// Emit a tidy CSV of a series, its smoothed channels and running log-likelihoods
    PlotData(PlotArgs),
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long)]
    raw: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Moving-average width in days (1 disables smoothing)
    #[arg(long, default_value_t = 12)]
    smooth_window: usize,
    /// Day window START:END, inclusive
    #[arg(long, default_value = "0:244")]
    window: String,
    /// Smooth p_water as well as hv_anom
    #[arg(long)]
    smooth_p_water: bool,
}

#[derive(Debug, Args, Clone)]
struct FitArgs {
    /// Mixture components per class
    #[arg(long, default_value_t = 10)]
    components: usize,
    /// k-means++ restarts for initialisation
    #[arg(long, default_value_t = 10)]
    n_init: usize,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Relative log-likelihood tolerance for convergence
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Ridge, relative to the mean variance of the embedded points
    #[arg(long, default_value_t = 1e-6)]
    reg: f64,
}

#[derive(Debug, Args, Clone)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Channels to use, comma separated [default: all channels in the file]
    #[arg(long, value_delimiter = ',')]
    channels: Option<Vec<String>>,
    /// Representatives as CLASS=SERIES_ID,... [default: first series of each class]
    #[arg(long)]
    reps: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    tau: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Inclusive LO:HI range for both tau and d
    #[arg(long, default_value = "2:30")]
    range: String,
    /// Override the tau range
    #[arg(long)]
    tau_range: Option<String>,
    /// Override the d range
    #[arg(long)]
    dim_range: Option<String>,
    /// Fraction of each class held out from selection and scored at the best cell
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Leave the seconds column empty so the table is reproducible byte for byte
    #[arg(long)]
    no_timing: bool,
    /// Output directory for grid.csv and summary.json
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON spec; omitted fields take their defaults
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    series: String,
    #[arg(long, default_value_t = 12)]
    smooth_window: usize,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Preprocess(a) => commands::preprocess(a),
        Command::Train(a) => commands::train(a, seed),
        Command::Classify(a) => commands::classify(a),
        Command::GridSearch(a) => commands::grid_search(a, seed),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Synth(a) => commands::synth(a, seed),
        Command::PlotData(a) => commands::plot_data(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rpsgmm: {e}");
            ExitCode::from(e.code())
        }
    }
}
