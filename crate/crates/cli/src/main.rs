mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Overrides;

/// Optimal transport between point clouds and polylines.
#[derive(Debug, Parser)]
#[command(name = "curvling", version)]
struct Cli {
    /// Worker threads for the transport evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the dual problem for a fixed polyline.
    Transport(Overrides),
    /// Fit a polyline to an image or point cloud.
    Curvle(Overrides),
    /// Fit a chain of disjoint segments (every odd segment has zero mass).
    Filaments(Overrides),
    /// Solver comparison or thread scaling on random instances.
    Bench(BenchArgs),
    /// Genericity test and finite-difference checks.
    Check(CheckArgs),
}

#[derive(Debug, clap::Args)]
struct BenchArgs {
    #[command(subcommand)]
    mode: BenchMode,
}

#[derive(Debug, Subcommand)]
enum BenchMode {
    /// Every method for a fixed iteration budget.
    Solvers {
        /// Atoms per instance.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Segments per instance.
        #[arg(long, default_value_t = 100)]
        p: usize,
        /// Instance seeds, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
        seeds: Vec<u64>,
        /// Iteration budget of every method.
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        /// Stop once the gradient norm falls below this.
        #[arg(long, default_value_t = 1e-12)]
        grad_tol: f64,
        /// CSV output; stdout when absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Time one evaluation at several thread counts.
    Scaling {
        /// Atoms of the instance.
        #[arg(long, default_value_t = 20_000)]
        n: usize,
        /// Segments of the instance.
        #[arg(long, default_value_t = 8_000)]
        p: usize,
        /// Instance seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Thread counts to time, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8])]
        thread_counts: Vec<usize>,
        /// Timed evaluations per thread count; the fastest is kept.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// CSV output; stdout when absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct CheckArgs {
    #[command(flatten)]
    run: Overrides,
    /// Relative tolerance of the genericity test.
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    /// Run the O(p n^2) genericity test at any size.
    #[arg(long)]
    force: bool,
    /// Finite-difference checks on a random instance of this many atoms
    /// and segments (`n,p`) instead of the configured input.
    #[arg(long, value_delimiter = ',')]
    random: Option<Vec<usize>>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot set up {t} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Transport(o) => commands::transport(&o, cli.threads),
        Command::Curvle(o) => commands::curvle(&o, cli.threads, false),
        Command::Filaments(o) => commands::curvle(&o, cli.threads, true),
        Command::Bench(b) => match b.mode {
            BenchMode::Solvers { n, p, seeds, iterations, grad_tol, out } => {
                commands::bench_solvers(n, p, &seeds, iterations, grad_tol, out.as_deref())
            }
            BenchMode::Scaling { n, p, seed, thread_counts, repeats, out } => {
                commands::bench_scaling(n, p, seed, &thread_counts, repeats, out.as_deref())
            }
        },
        Command::Check(c) => commands::check(&c.run, c.tolerance, c.force, c.random.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
