use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chainlaw::cli;

/// Tail-event and entrance-law analyses for nonhomogeneous Markov chains.
#[derive(Parser)]
#[command(name = "chainlaw", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a chain spec against the model invariants.
    Validate {
        /// JSON chain specification.
        #[arg(long)]
        spec: PathBuf,
    },
    /// Entrance-law uniqueness analysis: diameter trace and vertex report.
    Entrance {
        #[arg(long)]
        spec: PathBuf,
        /// Probe depth below the window end.
        #[arg(long)]
        depth: i64,
        /// Uniqueness tolerance on the hull diameter.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Output directory for CSV tables.
        #[arg(long)]
        out: PathBuf,
    },
    /// Band probabilities for a tail event, optionally cross-checked by
    /// simulation.
    Zeroone {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of trajectories for the empirical columns.
        #[arg(long)]
        simulate: Option<usize>,
        /// Root seed for the trajectory batch.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Tightness checks, truncation defects and walk bounds for countable
    /// families.
    Countable {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let outcome = match args.command {
        Command::Validate { spec } => cli::cmd_validate(&spec),
        Command::Entrance {
            spec,
            depth,
            tol,
            out,
        } => cli::cmd_entrance(&spec, depth, tol, &out),
        Command::Zeroone {
            spec,
            out,
            simulate,
            seed,
        } => cli::cmd_zeroone(&spec, &out, simulate, seed),
        Command::Countable { spec, out } => cli::cmd_countable(&spec, &out),
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&outcome.summary).expect("summary serializes")
    );
    ExitCode::from(outcome.exit_code as u8)
}
