use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod error;
mod manifest;

/// Build mosaicked instruction-tuning data and score multi-instruction
/// responses.
#[derive(Debug, Parser)]
#[command(name = "mosaic", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize mosaicked samples from an instruction dataset.
    Build(BuildArgs),
    /// Summarize a mosaicked file written with metadata.
    Stats(StatsArgs),
    /// Build evaluation prompts or score responses.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// List the active format and rule registry.
    Rules(RulesArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InputFormat {
    Jsonl,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Schema {
    #[value(name = "alpaca-triplet")]
    AlpacaTriplet,
    Pair,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Family {
    Fix,
    Uniform,
    Exponential,
    Lognormal,
    Logistic,
    Pareto,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GroupingArg {
    Random,
    #[value(name = "by_cluster", alias = "by-cluster")]
    ByCluster,
}

/// Engine settings shared by `build` and `eval make`. Flags override the
/// config file, which overrides built-in defaults.
#[derive(Debug, Args)]
struct EngineArgs {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed; falls back to the config file, then MOSAIC_SEED.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long, value_enum)]
    distribution: Option<Family>,
    /// Length budget in counter units.
    #[arg(long)]
    budget: Option<usize>,
    /// Weights for format, format_permute, format_maskout, e.g. "0.4,0.3,0.3".
    #[arg(long)]
    strategy_weights: Option<String>,
    #[arg(long)]
    wrap_prob: Option<f64>,
    #[arg(long, value_enum)]
    grouping: Option<GroupingArg>,
    /// Plain concatenation with serial digits, no meta-instructions.
    #[arg(long)]
    primary: bool,
    /// Registry override file.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Input container; sniffed from content when omitted.
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    #[arg(long, value_enum, default_value = "alpaca-triplet")]
    schema: Schema,
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    /// Worker threads; output does not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write only instruction/output keys.
    #[arg(long)]
    no_metadata: bool,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,
    /// Print machine-readable JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Write prompts, answer keys, and gold responses per k.
    Make(EvalMakeArgs),
    /// Score responses against answer keys.
    Score(EvalScoreArgs),
}

#[derive(Debug, Args)]
struct EvalMakeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated instruction counts.
    #[arg(long, value_delimiter = ',', default_value = "3,5,7")]
    k: Vec<usize>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Debug, Args)]
struct EvalScoreArgs {
    /// Answer-key files (repeatable).
    #[arg(long, required = true, num_args = 1..)]
    keys: Vec<PathBuf>,
    #[arg(long)]
    responses: PathBuf,
    /// Report output path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct RulesArgs {
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Build(args) => commands::build(args),
        Command::Stats(args) => commands::stats(args),
        Command::Eval(EvalCommand::Make(args)) => commands::eval_make(args),
        Command::Eval(EvalCommand::Score(args)) => commands::eval_score(args),
        Command::Rules(args) => commands::rules(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
