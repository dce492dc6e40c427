//! Operator surface for the task-bootstrapping pipeline.
//!
//! Follows two conventions throughout: human-readable progress goes to
//! stderr, machine-readable data to stdout (or to files named by flags),
//! and every command prints the config digest and rng seed it ran with.
//! Exit codes: 0 success, 1 operational error, 2 usage error, 3 data
//! validation error.

mod backend;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "instructgen", version, about = "Bootstrap, filter, analyze, and export instruction-tuning tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command that talks to a completion backend.
#[derive(Args, Clone, Debug)]
struct BackendArgs {
    /// Replay completions from a fixture file instead of calling an endpoint
    #[arg(long, value_name = "FIXTURES")]
    scripted: Option<PathBuf>,
    /// Record all request/response pairs into a replayable fixture file
    #[arg(long, value_name = "PATH")]
    record: Option<PathBuf>,
    /// Append request metadata to this audit log
    #[arg(long, value_name = "PATH")]
    audit_log: Option<PathBuf>,
    /// Request budget per minute
    #[arg(long)]
    requests_per_min: Option<u32>,
    /// Token budget per minute
    #[arg(long)]
    tokens_per_min: Option<u64>,
    /// Concurrent requests in flight
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run the bootstrap loop: grow, classify, and instantiate tasks
    Generate(GenerateArgs),
    /// Classify unknown-type tasks in a pool file
    Classify(PoolInOutArgs),
    /// Generate instances for classified tasks that have none
    Instances(PoolInOutArgs),
    /// Rewrite every instance output via the completion backend
    Regenerate(PoolInOutArgs),
    /// Audit a pool against the filter chain and recorded novelty scores
    Filter(FilterArgs),
    /// Print pool statistics
    Stats(StatsArgs),
    /// Overlap, length, verb-noun, and agreement reports
    Analyze(AnalyzeArgs),
    /// Finetune files, subsamples, and evaluation sheets
    #[command(subcommand)]
    Export(ExportCommand),
}

#[derive(Args)]
struct GenerateArgs {
    /// Seed task file (headerless record lines)
    #[arg(long, required_unless_present = "resume")]
    seeds: Option<PathBuf>,
    /// Final pool file to write
    #[arg(long)]
    out: PathBuf,
    /// Stop growing once this many generated tasks are admitted
    #[arg(long)]
    target: Option<usize>,
    /// Absolute cap on generation rounds
    #[arg(long)]
    rounds_cap: Option<u32>,
    /// Base rng seed
    #[arg(long)]
    seed: Option<u64>,
    /// Pipeline config file (JSON mirroring the config fields)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Instruction prompts per round
    #[arg(long)]
    prompts_per_round: Option<usize>,
    /// Resume from this checkpoint instead of starting from seeds
    #[arg(long, value_name = "CHECKPOINT")]
    resume: Option<PathBuf>,
    /// Pause (checkpoint and exit) after this many rounds this invocation
    #[arg(long)]
    stop_after_rounds: Option<u32>,
    /// Checkpoint path (default: <out>.checkpoint.jsonl)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Rejected-candidate log (default: <out>.rejects.jsonl)
    #[arg(long)]
    rejects_log: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct PoolInOutArgs {
    /// Input pool file
    #[arg(long)]
    pool: PathBuf,
    /// Output pool file
    #[arg(long)]
    out: PathBuf,
    /// Pipeline config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct FilterArgs {
    /// Pool file to audit
    #[arg(long)]
    pool: PathBuf,
    /// Pipeline config file (for the filter settings)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exit 3 if any audited task is rejected or any score fails to replay
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct StatsArgs {
    /// Pool file to measure
    #[arg(long)]
    pool: PathBuf,
    /// Emit metric,value CSV instead of aligned text
    #[arg(long)]
    csv: bool,
    /// Which tasks to measure
    #[arg(long, value_parser = ["all", "seed", "generated"], default_value = "all")]
    population: String,
    /// Accepted for interface uniformity; this command draws no randomness
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Accepted for interface uniformity; analysis draws no randomness
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: AnalyzeCommand,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Max ROUGE-L of each candidate instruction against a reference pool
    Overlap {
        /// Pool whose instructions are scored
        #[arg(long)]
        candidates: PathBuf,
        /// Pool providing the reference instructions
        #[arg(long)]
        references: PathBuf,
        /// Restrict candidates to generated tasks
        #[arg(long)]
        generated_only: bool,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Write per-candidate scores (index,score,nearest) to this CSV
        #[arg(long)]
        per_candidate: Option<PathBuf>,
    },
    /// Word-length histograms for instructions, inputs, and outputs
    Lengths {
        #[arg(long)]
        pool: PathBuf,
        /// Directory for the three histogram CSVs
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Most common head verbs and their noun objects
    Verbs {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value_t = 20)]
        top_verbs: usize,
        #[arg(long, default_value_t = 4)]
        top_nouns: usize,
    },
    /// Cohen's kappa between two rating columns
    Kappa {
        /// CSV with a header and two rating columns
        #[arg(long)]
        ratings: PathBuf,
        /// Label merge groups, e.g. "A,B|C,D"
        #[arg(long)]
        collapse: Option<String>,
    },
    /// Spearman's rho between two ordinal rating columns
    Spearman {
        #[arg(long)]
        ratings: PathBuf,
        /// Label order, highest first, e.g. "A>B>C>D"
        #[arg(long)]
        order: String,
    },
}

#[derive(Subcommand)]
enum ExportCommand {
    /// Write prompt/completion training records
    Finetune {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Template policy: fixed:<id>, random, or per-task
        #[arg(long, default_value = "random")]
        template: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Append this end-of-text marker to every completion
        #[arg(long)]
        eot: Option<String>,
        /// Error on zero-instance tasks instead of skipping them
        #[arg(long)]
        strict: bool,
    },
    /// Coverage-preserving subsample of a pool
    Subsample {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep exactly this many instances (covers every instruction)
        #[arg(long, conflicts_with = "instructions")]
        instances: Option<usize>,
        /// Keep this many whole tasks
        #[arg(long)]
        instructions: Option<usize>,
        /// Force seed tasks into an --instructions sample
        #[arg(long)]
        include_seeds: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Anonymized human-evaluation sheet plus its answer key
    Evalsheet {
        /// JSONL items: {id?, instruction, input?, target?, responses:{model:text}}
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        sheet: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    // die quietly when a downstream pipe closes, like other line-oriented tools
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::generate::run(args),
        Command::Classify(args) => commands::pool_ops::classify(args),
        Command::Instances(args) => commands::pool_ops::instances(args),
        Command::Regenerate(args) => commands::pool_ops::regenerate(args),
        Command::Filter(args) => commands::filter::run(args),
        Command::Stats(args) => commands::stats::run(args),
        Command::Analyze(args) => commands::analyze::run(args.command, args.seed),
        Command::Export(cmd) => commands::export::run(cmd),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<instructgen::Error>()
                .map(|e| e.exit_class().code())
                .unwrap_or(1);
            ExitCode::from(code)
        }
    }
}
