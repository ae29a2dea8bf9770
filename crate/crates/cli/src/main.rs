//! `slbf`: stream deduplication and measurement runs for the sliding Bloom
//! filter.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 the dictionary
//! overflowed, 4 an FPR run was statistically underpowered (`ε·T < 20`),
//! 1 any other I/O failure.

mod args;
mod dedup;
mod output;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde::Serialize;
use slbf::harness::{measure_fpr, space_report, Stream, StreamPattern, FULL_UNIVERSE};
use slbf::{CostReport, FilterParams, SlidingFilter};

use args::{BenchArgs, Cli, Command, DedupArgs, FilterArgs, FprArgs};
use dedup::Dedup;
use output::write_report;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Input(String),
    Overflow(String),
    Io(io::Error),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

fn params_for(args: &FilterArgs) -> Result<FilterParams, Failure> {
    FilterParams::derive(args.window, args.slack, args.epsilon, FULL_UNIVERSE)
        .map_err(|e| Failure::Config(e.to_string()))
}

fn dedup(args: &DedupArgs) -> Result<ExitCode, Failure> {
    let params = params_for(&args.filter)?;
    let filter = SlidingFilter::new(params, args.filter.seed);
    let stdout = io::stdout().lock();
    let mut run = Dedup::new(
        filter,
        BufWriter::new(stdout),
        args.filter.format,
        args.filter.quiet,
    );
    match args.input.as_deref() {
        Some(path) if path.as_os_str() != "-" => {
            let file =
                File::open(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            run.run(BufReader::new(file), args.input_format)?;
        }
        _ => run.run(io::stdin().lock(), args.input_format)?,
    }
    run.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn fpr(args: &FprArgs) -> Result<ExitCode, Failure> {
    let f = &args.filter;
    params_for(f)?;
    let n = f.window;
    let stream_len = args.stream_len.unwrap_or_else(|| {
        n.saturating_add(f.slack.finite().unwrap_or(0))
            .saturating_add(2 * n)
    });
    let report = measure_fpr(n, f.slack, f.epsilon, stream_len, args.trials, f.seed).map_err(
        |e| match e {
            slbf::Error::InsertOverflow { .. } => Failure::Overflow(e.to_string()),
            other => Failure::Config(other.to_string()),
        },
    )?;
    write_report(&mut io::stdout().lock(), f.format, &report)?;
    if report.underpowered {
        eprintln!(
            "warning: epsilon * trials = {:.2} is below 20; the estimate is underpowered",
            f.epsilon * args.trials as f64
        );
        return Ok(ExitCode::from(4));
    }
    Ok(ExitCode::SUCCESS)
}

fn space(args: &FilterArgs) -> Result<ExitCode, Failure> {
    params_for(args)?;
    let report = space_report(args.window, args.slack, args.epsilon, args.seed)
        .map_err(|e| Failure::Config(e.to_string()))?;
    write_report(&mut io::stdout().lock(), args.format, &report)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct BenchReport {
    schema: &'static str,
    params: FilterParams,
    seed: u64,
    inserts: u64,
    insert_seconds: f64,
    inserts_per_sec: f64,
    queries: u64,
    query_seconds: f64,
    queries_per_sec: f64,
    max_query_cells: u64,
    max_insert_cells: u64,
    max_kick_chain: u64,
    max_kick_cells: u64,
    cost: CostReport,
}

fn bench(args: &BenchArgs) -> Result<ExitCode, Failure> {
    let f = &args.filter;
    let params = params_for(f)?;
    let mut filter = SlidingFilter::new(params, f.seed);
    let stream: Vec<u64> = Stream::new(StreamPattern::Distinct, f.seed)
        .take(args.inserts as usize)
        .collect();

    let start = Instant::now();
    for &x in &stream {
        filter
            .insert(x)
            .map_err(|e| Failure::Overflow(e.to_string()))?;
    }
    let insert_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let hits = stream.iter().rev().filter(|&&x| filter.query(x)).count();
    let query_seconds = start.elapsed().as_secs_f64();
    std::hint::black_box(hits);

    let cost = filter.step_cost_stats();
    let report = BenchReport {
        schema: "slbf.bench/1",
        params,
        seed: f.seed,
        inserts: args.inserts,
        insert_seconds,
        inserts_per_sec: args.inserts as f64 / insert_seconds.max(f64::MIN_POSITIVE),
        queries: stream.len() as u64,
        query_seconds,
        queries_per_sec: stream.len() as f64 / query_seconds.max(f64::MIN_POSITIVE),
        max_query_cells: cost.max_query_cells,
        max_insert_cells: cost.max_insert_cells,
        max_kick_chain: cost.max_kick_chain,
        max_kick_cells: cost.max_kick_cells,
        cost,
    };
    write_report(&mut io::stdout().lock(), f.format, &report)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Dedup(a) => dedup(a),
        Command::Fpr(a) => fpr(a),
        Command::Space(a) => space(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(failure) => {
            let (code, message) = match failure {
                Failure::Config(m) => (2, format!("invalid configuration: {m}")),
                Failure::Input(m) => (2, format!("bad input: {m}")),
                Failure::Overflow(m) => (3, m),
                Failure::Io(e) => (1, e.to_string()),
            };
            let _ = writeln!(io::stderr(), "slbf: {message}");
            ExitCode::from(code)
        }
    }
}
