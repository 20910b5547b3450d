//! `asmb`: generate synthetic suites, run policies over them, and score the
//! runs.
//!
//! Exit codes: 0 when the command ran (a run may still record failed
//! cells), 2 on bad input, 3 on I/O errors.

mod commands;
mod config;
mod store;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use asmb_core::synth::{GapSchedule, Span};
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "asmb", version, about = "Anchored state memory benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic suite and its manifest.
    Gen(GenArgs),
    /// Run policies over a suite in one or more history modes.
    Run(RunArgs),
    /// Score one run directory.
    Eval(EvalArgs),
    /// Join several run directories into one comparison report.
    Report(ReportArgs),
    /// Check every task of a suite for soundness.
    Selfcheck(SelfcheckArgs),
}

fn parse_span(s: &str) -> Result<Span, String> {
    let parts: Vec<&str> = s.split([',', '-']).map(str::trim).collect();
    let num = |p: &str| p.parse::<usize>().map_err(|_| format!("invalid range `{s}` (expected MIN,MAX)"));
    match parts.as_slice() {
        [one] => num(one).map(|v| Span::new(v, v)),
        [lo, hi] => Ok(Span::new(num(lo)?, num(hi)?)),
        _ => Err(format!("invalid range `{s}` (expected MIN,MAX)")),
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Fixed,
    LengthScaled,
}

#[derive(Args)]
struct GenArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Suite file to write; the manifest goes next to it. Defaults to `run.suite`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Steps per task, `MIN,MAX`.
    #[arg(long, value_parser = parse_span)]
    length: Option<Span>,
    /// Steps between observing and reusing a value, `MIN,MAX`.
    #[arg(long, value_parser = parse_span)]
    gap: Option<Span>,
    #[arg(long, value_parser = parse_span)]
    dependencies: Option<Span>,
    #[arg(long, value_parser = parse_span)]
    anchors: Option<Span>,
    #[arg(long)]
    exception_probability: Option<f64>,
    #[arg(long)]
    summary_carry_probability: Option<f64>,
    #[arg(long)]
    app_pool: Option<usize>,
    /// Intent weights, e.g. `lookup=0.5,purchase_order=0.5`.
    #[arg(long)]
    intent_mix: Option<String>,
    #[arg(long, value_enum)]
    gap_schedule: Option<ScheduleArg>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    suite: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `oracle`, `forgetful[:window=N]` or `llm[:model=NAME]`; repeatable.
    #[arg(long = "policy", value_delimiter = ',')]
    policies: Vec<String>,
    /// Comma-separated subset of raw, summary, asm.
    #[arg(long, value_delimiter = ',')]
    modes: Vec<String>,
    /// `all_active`, `link_closure` or `recency_top_k:k=N`.
    #[arg(long)]
    retrieval: Option<String>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cells run in parallel.
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long, value_parser = ["auto", "measured", "zero"])]
    timing: Option<String>,
    #[arg(long, env = "ASMB_ENDPOINT")]
    endpoint: Option<String>,
    #[arg(long, env = "ASMB_MODEL")]
    model: Option<String>,
    #[arg(long, env = "ASMB_API_KEY", hide_env_values = true)]
    api_key: Option<String>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    max_retries: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    backoff_ms: Option<u64>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    /// Record every prompt and response verbatim.
    #[arg(long)]
    trace: bool,
}

#[derive(Args, Clone)]
struct MetricArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Score text steps 0/1 at this ANLS threshold instead of fractionally.
    #[arg(long)]
    text_threshold: Option<f64>,
    /// `closure` (FINISH and its causal ancestors) or `all`.
    #[arg(long)]
    tcr_scope: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    run: PathBuf,
    /// Suite to score against; defaults to the one named in the run manifest.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[command(flatten)]
    metrics: MetricArgs,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Directory for report.json, report.txt and buckets.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    metrics: MetricArgs,
}

#[derive(Args)]
struct SelfcheckArgs {
    suite: PathBuf,
    /// Expected gap bounds; defaults to the suite manifest's.
    #[arg(long, value_parser = parse_span)]
    gap: Option<Span>,
}

impl From<ScheduleArg> for GapSchedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Fixed => GapSchedule::Fixed,
            ScheduleArg::LengthScaled => GapSchedule::LengthScaled,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Run(a) => commands::run(a),
        Command::Eval(a) => commands::eval(a),
        Command::Report(a) => commands::report(a),
        Command::Selfcheck(a) => commands::selfcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
