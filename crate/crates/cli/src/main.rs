mod commands;
mod plots;
mod repro;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Tabular TD, QTD and PQTD policy-evaluation experiments.
#[derive(Debug, Parser)]
#[command(name = "qtdlab", version, about)]
pub struct Cli {
    /// Worker threads for sweeps and fixed-point curves (default: all cores).
    #[arg(long, global = true, env = "QTDLAB_JOBS")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an environment and write it as TOML.
    GenEnv(GenEnvArgs),
    /// Run the learning-rate sweeps described by a config file.
    RunSweep(RunSweepArgs),
    /// Compute fixed points for a list of quantile counts.
    FixedPoint(FixedPointArgs),
    /// Compare two sweep CSVs checkpoint by checkpoint.
    Improvement(ImprovementArgs),
    /// Render a figure from CSV results.
    Plot(PlotArgs),
    /// Run the desk-scale reproduction and write every artifact.
    Repro(ReproArgs),
}

#[derive(Debug, Args)]
pub struct GenEnvArgs {
    /// Transition structure: dirichlet, garnet, cycle or skewed.
    #[arg(long)]
    pub kind: String,
    /// Number of states.
    #[arg(long)]
    pub n: Option<usize>,
    /// Reward family: point_mass, gaussian, exponential or student_t2.
    #[arg(long, default_value = "gaussian")]
    pub rewards: String,
    /// Environment seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub branching: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Gaussian reward standard deviation.
    #[arg(long)]
    pub reward_scale: Option<f64>,
    #[arg(long)]
    pub skew: Option<f64>,
    #[arg(long)]
    pub skew_prob: Option<f64>,
    /// Output file (default: standard output).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunSweepArgs {
    /// Experiment config (TOML).
    pub config: PathBuf,
    /// Directory for the sweep CSVs.
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
    /// Use 1000 runs per learning rate.
    #[arg(long)]
    pub paper_scale: bool,
    /// Overrides the number of runs per learning rate.
    #[arg(long, conflicts_with = "paper_scale")]
    pub runs: Option<usize>,
    /// Overrides the base seed of every experiment.
    #[arg(long, env = "QTDLAB_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FixedPointArgs {
    /// Environment file written by gen-env.
    pub env: PathBuf,
    /// Comma-separated quantile counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128")]
    pub m: Vec<usize>,
    #[arg(long, default_value = "qtd")]
    pub algo: String,
    #[arg(long, default_value_t = qtdlab::dp::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, default_value_t = qtdlab::dp::DEFAULT_MAX_ITERATIONS)]
    pub max_iterations: usize,
    /// Output CSV (default: standard output).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImprovementArgs {
    /// Sweep CSV of the numerator agent.
    pub a: PathBuf,
    /// Sweep CSV of the reference agent.
    pub b: PathBuf,
    /// Output CSV (default: standard output).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum FigureKind {
    MseVsLr,
    ImprovementVsUpdates,
    ErrorVsM,
    OptimalLrVsUpdates,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    pub kind: FigureKind,
    /// Input CSV files.
    #[arg(long = "input", short, required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Output SVG.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub title: Option<String>,
    #[arg(long)]
    pub x_label: Option<String>,
    #[arg(long)]
    pub y_label: Option<String>,
    /// Checkpoint shown by mse_vs_lr (default: the last one).
    #[arg(long)]
    pub checkpoint: Option<usize>,
    #[arg(long)]
    pub linear_x: bool,
    #[arg(long)]
    pub linear_y: bool,
}

#[derive(Debug, Args)]
pub struct ReproArgs {
    /// Output directory.
    #[arg(long, short, default_value = "repro")]
    pub out: PathBuf,
    /// 20 runs and 1000 updates per sweep, for a smoke test.
    #[arg(long)]
    pub quick: bool,
    /// Overrides the number of runs per learning rate.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Overrides the number of updates per run.
    #[arg(long)]
    pub updates: Option<usize>,
    /// Overrides the base seed of every experiment.
    #[arg(long, env = "QTDLAB_SEED")]
    pub seed: Option<u64>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Numerical(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: could not configure {jobs} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::GenEnv(a) => commands::gen_env(a),
        Command::RunSweep(a) => commands::run_sweep(a),
        Command::FixedPoint(a) => commands::fixed_point(a),
        Command::Improvement(a) => commands::improvement(a),
        Command::Plot(a) => plots::plot(a),
        Command::Repro(a) => repro::repro(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(2)
        }
    }
}
