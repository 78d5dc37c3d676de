//! `hte` command-line tool: train, predict, benchmark and study histogram
//! transform ensembles.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hte::{ErrorKind, HteError, TargetColumn};

use crate::settings::parse_override;

#[derive(Debug, Parser)]
#[command(
    name = "hte",
    version,
    about = "Histogram transform ensembles for regression"
)]
pub struct Cli {
    /// Worker threads; defaults to all available cores.
    #[arg(long, global = true, env = "HTE_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an ensemble on a CSV file and write the model.
    Train(TrainArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Run a named benchmark study.
    Bench(BenchArgs),
    /// Run the study described in a config file.
    Study(StudyArgs),
    /// Print the theoretical parameter schedule for a sample size.
    Schedule(ScheduleArgs),
    /// Print model metadata.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Target column, by header name or zero-based index.
    #[arg(long)]
    pub target: Option<TargetColumn>,
    /// The CSV has no header row.
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Output model file.
    #[arg(long, short = 'o')]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a numeric training parameter, e.g. `--set trees=20`.
    #[arg(long = "set", value_parser = parse_override)]
    pub overrides: Vec<(String, f64)>,
    /// Print the summary as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Output CSV; standard output when omitted.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// Output file; standard output when omitted.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// One of sin16, t-study, counter3d, scale-study, scale-figure.
    pub preset: String,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override a base training parameter, e.g. `--set trees=5`.
    #[arg(long = "set", value_parser = parse_override)]
    pub overrides: Vec<(String, f64)>,
    /// Skip timing; repetitions then run in parallel.
    #[arg(long)]
    pub no_timing: bool,
    #[command(flatten)]
    pub table: TableArgs,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// JSON config file with a `study` section.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "set", value_parser = parse_override)]
    pub overrides: Vec<(String, f64)>,
    #[command(flatten)]
    pub table: TableArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SmoothnessClass {
    C0,
    C1,
    Ck,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Sample size.
    #[arg(long)]
    pub n: u64,
    /// Input dimension.
    #[arg(long)]
    pub d: usize,
    #[arg(long = "class", value_enum)]
    pub class: SmoothnessClass,
    /// Hölder exponent in (0, 1].
    #[arg(long)]
    pub alpha: f64,
    /// Number of derivatives for the `ck` class.
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub model: PathBuf,
    /// Print a config that retrains this model instead of the metadata.
    #[arg(long)]
    pub emit_config: bool,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Training => 3,
    }
}

fn one_line(s: &str) -> String {
    s.lines()
        .map(str::trim)
        .take_while(|l| !l.starts_with("Usage:"))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn fail(err: &HteError) -> ExitCode {
    eprintln!("hte: {}", one_line(&err.to_string()));
    ExitCode::from(exit_code(err.kind()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(
                e.kind(),
                K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("hte: {}", one_line(&e.to_string()));
            return ExitCode::from(1);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => return fail(&HteError::config("threads", e.to_string())),
    };
    match pool.install(|| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
