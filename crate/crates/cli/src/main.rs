mod commands;
mod config;
mod sdg_cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use gmerge_core::evaluator::EvalError;
use gmerge_core::merge_search::SearchError;
use gmerge_core::sdg::SdgError;
use gmerge_core::{MergeError, StoreError};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (checkpoint format GMRG1)");

#[derive(Debug, Parser)]
#[command(name = "gmerge", version = VERSION, about = "Merge checkpoints, search merge weights, prepare guardrail data")]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Merge checkpoints with one operator.
    Merge(MergeArgs),
    /// Search merge weights and merge types against an evaluator.
    Search(SearchArgs),
    /// Score one checkpoint.
    Eval(EvalArgs),
    /// Summarise a checkpoint.
    Inspect(InspectArgs),
    /// Convert between checkpoint files and JSON dumps (by extension).
    Convert(ConvertArgs),
    /// Generate a synthetic task and write one trained checkpoint per slice.
    Toy(ToyArgs),
    /// Synthetic data utilities.
    #[command(subcommand)]
    Sdg(sdg_cmd::SdgCommand),
}

/// Flags that override the `merge` section of the config.
#[derive(Debug, Args, Default)]
pub struct MergeFlags {
    #[arg(long, value_parser = parse_enum::<gmerge_core::Algorithm>)]
    algo: Option<gmerge_core::Algorithm>,
    /// full, attention, ffn or base.
    #[arg(long, value_parser = parse_enum::<gmerge_core::MergeType>)]
    tau: Option<gmerge_core::MergeType>,
    /// Comma-separated weights summing to 1.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// TIES keep percentage.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// DARE drop rate.
    #[arg(long)]
    p: Option<f64>,
    /// SLERP interpolation factor.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, value_parser = parse_enum::<gmerge_core::merge_algos::SignMode>)]
    sign_mode: Option<gmerge_core::merge_algos::SignMode>,
    #[arg(long, value_parser = parse_enum::<gmerge_core::merge_algos::DisjointMode>)]
    disjoint_mode: Option<gmerge_core::merge_algos::DisjointMode>,
    /// Index into --models of the model whose unmerged tensors are kept.
    #[arg(long)]
    carrier: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(long, num_args = 1.., required = true)]
    models: Vec<PathBuf>,
    /// Shared initialization (required by ties and dare).
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    merge: MergeFlags,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, num_args = 1.., required = true)]
    models: Vec<PathBuf>,
    #[arg(long)]
    init: Option<PathBuf>,
    /// `toy:<spec.json or inline JSON>`, `optimum:<checkpoint>` or `exec:<command>`.
    #[arg(long)]
    evaluator: String,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, value_parser = parse_enum::<gmerge_core::merge_search::Sampler>)]
    sampler: Option<gmerge_core::merge_search::Sampler>,
    #[arg(long, value_parser = parse_enum::<gmerge_core::merge_search::UpdateRule>)]
    update_rule: Option<gmerge_core::merge_search::UpdateRule>,
    #[arg(long, value_parser = parse_enum::<gmerge_core::merge_search::TauSampling>)]
    tau_sampling: Option<gmerge_core::merge_search::TauSampling>,
    #[arg(long, value_parser = parse_enum::<gmerge_core::merge_search::FBestTiming>)]
    fbest_timing: Option<gmerge_core::merge_search::FBestTiming>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Candidate merge types, comma-separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_enum::<gmerge_core::MergeType>)]
    taus: Option<Vec<gmerge_core::MergeType>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-iteration JSON-lines report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Where to write the best merged checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock milliseconds per iteration in the report.
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    merge: MergeFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    evaluator: String,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    path: PathBuf,
    /// Emit one JSON object instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    input: PathBuf,
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    /// Task spec JSON file (falls back to the config's `toy` section).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    External(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::External(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::External(m) => m,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MergeError> for CliError {
    fn from(e: MergeError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::MalformedModel(_) => CliError::Data(e.to_string()),
            _ => CliError::External(e.to_string()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::EvaluatorFailure { .. } | SearchError::ScoreOutOfRange(_) => {
                CliError::External(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SdgError> for CliError {
    fn from(e: SdgError) -> Self {
        match e {
            SdgError::AdapterExit { .. }
            | SdgError::MalformedAdapterOutput { .. }
            | SdgError::CountShortfall { .. } => CliError::External(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Parse a flag value through the type's JSON string representation.
fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = config::Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Merge(args) => commands::merge(args, config),
        Command::Search(args) => commands::search(args, config),
        Command::Eval(args) => commands::eval(args, config),
        Command::Inspect(args) => commands::inspect(args, config),
        Command::Convert(args) => commands::convert(args),
        Command::Toy(args) => commands::toy(args, config),
        Command::Sdg(cmd) => sdg_cmd::run(cmd, config),
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gmerge: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
