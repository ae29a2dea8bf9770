use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use slbf::Slack;

#[derive(Debug, Parser)]
#[command(name = "slbf", version, about = "Sliding Bloom filter tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flag elements already seen among the recent past of a stream.
    Dedup(DedupArgs),
    /// Measure the false-positive rate on a synthetic stream.
    Fpr(FprArgs),
    /// Report the space used against the lower and upper bounds.
    Space(FilterArgs),
    /// Time inserts and queries and report touched cells per operation.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    /// Window size n.
    #[arg(short = 'n', long = "window")]
    pub window: u64,

    /// Slack m: a positive integer or "inf".
    #[arg(short = 'm', long = "slack", default_value = "inf")]
    pub slack: Slack,

    /// False-positive bound epsilon, in (0, 1).
    #[arg(short = 'e', long = "epsilon", default_value_t = 0.01)]
    pub epsilon: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, value_enum, default_value_t = OutputFormat::Tsv)]
    pub format: OutputFormat,

    /// Print only the final summary.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    #[command(flatten)]
    pub filter: FilterArgs,

    /// Input file; standard input when absent or "-".
    pub input: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = InputFormat::Text)]
    pub input_format: InputFormat,
}

#[derive(Debug, Args)]
pub struct FprArgs {
    #[command(flatten)]
    pub filter: FilterArgs,

    /// Stream length; defaults to n + m + 2n (3n with infinite slack).
    #[arg(long)]
    pub stream_len: Option<u64>,

    /// Number of never-inserted elements to probe.
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub filter: FilterArgs,

    #[arg(long, default_value_t = 1_000_000)]
    pub inserts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Tsv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// Whitespace-separated tokens, hashed with 64-bit FNV-1a.
    Text,
    /// Raw little-endian 64-bit integers.
    Binary,
}
