//! `fifaudit`: audit a binary classifier's group-fairness bias and explain it
//! with fairness influence functions.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or contract error, 4 a
//! `check` fixture failed.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fifaudit::MetricKind;

#[derive(Debug, Parser)]
#[command(
    name = "fifaudit",
    version,
    about = "Explain group-fairness bias with fairness influence functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Statistical parity, equalized odds and predictive parity of a model.
    Metrics(MetricsArgs),
    /// Decompose one metric into feature-subset influences.
    Explain(ExplainArgs),
    /// Run the built-in oracle fixtures.
    Check(CheckArgs),
    /// Audit a retrained model before and after an intervention.
    Simulate(SimulateArgs),
    /// Write a synthetic dataset and its schema.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Sp,
    Eo,
    Pp,
}

impl From<Metric> for MetricKind {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Sp => MetricKind::StatisticalParity,
            Metric::Eo => MetricKind::EqualizedOdds,
            Metric::Pp => MetricKind::PredictiveParity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV with one header row.
    #[arg(long)]
    data: PathBuf,
    /// JSON schema sidecar naming features, sensitive columns and label.
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Output file, written atomically; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// `logistic`, `tree` (trained on the data), `column` (stored
    /// predictions), `dt1`/`dt2` (insurance trees) or a model JSON file.
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Same choices as for `metrics`.
    #[arg(long)]
    model: String,
    #[arg(long, value_enum, default_value = "sp")]
    metric: Metric,
    /// Largest feature-subset size λ.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=3))]
    max_order: u8,
    /// Entries shown before the residual bucket.
    #[arg(long, default_value_t = 7, value_parser = clap::value_parser!(u16).range(1..))]
    top: u16,
    /// Seeds the row flipped in a degenerate group.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
    /// Also write the bar chart here.
    #[arg(long)]
    chart: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Seeds the randomly drawn fixture instances.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InterventionKind {
    Reweigh,
    Poison,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TrainerKind {
    Logistic,
    Tree,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model family retrained before and after the intervention.
    #[arg(long, value_enum, default_value = "logistic")]
    model: TrainerKind,
    #[arg(long, value_enum)]
    intervention: InterventionKind,
    /// Share of positive labels flipped by `poison`.
    #[arg(long, default_value_t = 0.5)]
    fraction: f64,
    #[arg(long, value_enum, default_value = "sp")]
    metric: Metric,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=3))]
    max_order: u8,
    #[arg(long, default_value_t = 7, value_parser = clap::value_parser!(u16).range(1..))]
    top: u16,
    /// Seeds label poisoning and degenerate-group handling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
    /// Paired before/after chart. Defaults to the output path with an
    /// `.svg` extension when the main format is not SVG.
    #[arg(long)]
    chart: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Generator {
    Insurance,
    Population,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Generator,
    /// Rows per group (insurance) or in total (population).
    #[arg(long)]
    n: Option<usize>,
    /// Features of the population generator.
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination.
    #[arg(long)]
    out: PathBuf,
    /// Schema destination.
    #[arg(long)]
    schema_out: PathBuf,
}

/// Why a command stopped, mapped onto the exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Check(usize),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Check(_) => 4,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Metrics(a) => commands::metrics(&a),
        Command::Explain(a) => commands::explain(&a),
        Command::Check(a) => commands::check(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Generate(a) => commands::generate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) | Failure::Data(m) => eprintln!("error: {m}"),
                Failure::Check(n) => eprintln!("{n} check(s) failed"),
            }
            ExitCode::from(f.code())
        }
    }
}
