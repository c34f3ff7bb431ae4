//! `pacecurve`: fit pacing-profile models from race split CSVs.
//!
//! Exit codes: 0 success, 1 usage, 2 ingest, 3 fit, 4 decode.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "pacecurve", version, about = "Pacing-profile fPCA and hidden Markov modelling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Smooth a race corpus and fit functional principal components.
    FitFpca(FitFpcaArgs),
    /// Fit a hidden Markov model to career score sequences.
    FitHmm(FitHmmArgs),
    /// Decode per-race state posteriors and Viterbi paths.
    Decode(DecodeArgs),
    /// Sweep the number of states and choose one by AIC.
    SelectStates(SelectArgs),
    /// Generate a synthetic corpus with ground truth.
    Simulate(SimulateArgs),
    /// Write eigenfunction curves on a 1 m grid.
    ExportPlot(ExportArgs),
}

#[derive(Debug, Args)]
struct FitFpcaArgs {
    /// Race CSV.
    #[arg(long)]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    n_pc: usize,
    /// Number of cubic B-spline basis functions (default 8 for 500 m, 12 for 1000 m).
    #[arg(long)]
    basis_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CovarianceArg {
    Full,
    Diagonal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitialArg {
    Estimated,
    Stationary,
}

#[derive(Debug, Args)]
struct EmArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, value_enum, default_value = "full")]
    covariance: CovarianceArg,
    #[arg(long, value_enum, default_value = "estimated")]
    initial: InitialArg,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
}

#[derive(Debug, Args)]
struct FitHmmArgs {
    /// Race CSV.
    #[arg(long)]
    input: PathBuf,
    /// Fitted fPCA model JSON.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Number of states (default 4, or the selected count with --sweep).
    #[arg(long)]
    states: Option<usize>,
    /// Also run a state-count sweep, e.g. `2..7` (inclusive).
    #[arg(long, value_parser = parse_sweep)]
    sweep: Option<(usize, usize)>,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Inclusive state-count range.
    #[arg(long, value_parser = parse_sweep, default_value = "2..6")]
    sweep: (usize, usize),
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Both the fPCA and the HMM model JSON files, in any order.
    #[arg(long, num_args = 1.., required = true)]
    model: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write a state-by-race-index CSV for plotting.
    #[arg(long)]
    plot_data: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Generator spec JSON (defaults to the built-in spec for --distance).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    distance: u32,
    #[arg(long, default_value_t = 70)]
    athletes: usize,
    #[arg(long, default_value_t = 10)]
    races: usize,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Fitted fPCA model JSON.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_sweep(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected N..M, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad lower bound in {s:?}"))?;
    let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| format!("bad upper bound in {s:?}"))?;
    if a < 2 || b < a {
        return Err(format!("need 2 <= N <= M, got {s:?}"));
    }
    Ok((a, b))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::FitFpca(a) => commands::fit_fpca(&a),
        Command::FitHmm(a) => commands::fit_hmm(&a),
        Command::Decode(a) => commands::decode(&a),
        Command::SelectStates(a) => commands::select_states(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::ExportPlot(a) => commands::export_plot(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PACECURVE_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
