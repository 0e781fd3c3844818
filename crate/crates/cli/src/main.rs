//! `nnfs`: generate synthetic embedding datasets, run episodic few-shot
//! evaluations, benchmark methods and merge reports into result grids.

mod bench;
mod eval;
mod failure;
mod gen;
mod manifest;
mod render;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::failure::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "nnfs",
    version,
    about = "Nearest-neighbour few-shot evaluation over frozen embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Materialise a synthetic dataset spec into an EMB1 directory.
    Gen(gen::GenArgs),
    /// Run an episodic evaluation of one or all methods.
    Eval(eval::EvalArgs),
    /// Time each method per episode, relative to zero-shot.
    Bench(bench::BenchArgs),
    /// Merge per-language JSON reports into a methods × languages grid.
    Report(report::ReportArgs),
    /// Re-run an evaluation from the manifest embedded in its output and
    /// check the scores are reproduced bit for bit.
    Replay(eval::ReplayArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let outcome = match cli.command {
        Command::Gen(args) => gen::run(args, argv),
        Command::Eval(args) => eval::run(args, argv),
        Command::Bench(args) => bench::run(args, argv),
        Command::Report(args) => report::run(args, argv),
        Command::Replay(args) => eval::replay(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, message }) => {
            eprintln!("nnfs: {message}");
            ExitCode::from(code)
        }
    }
}

/// Configures the global rayon pool; `None` keeps rayon's default.
fn init_threads(threads: Option<usize>) -> Result<(), Failure> {
    match threads {
        None => Ok(()),
        Some(0) => Err(Failure::usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(format!("cannot start thread pool: {e}"))),
    }
}
