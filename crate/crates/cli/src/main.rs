use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use edgecut_cli::{
    cmd_cost, cmd_deploy, cmd_partition, cmd_replay, cmd_simulate, parse_seed_range, Output,
    SimulateArgs, SolveFlags, OUT_DIR_ENV,
};

#[derive(Parser)]
#[command(name = "edgecut", version, about = "Latency-constrained edge/cloud placement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the placement for a scenario.
    Partition {
        scenario: PathBuf,
        /// Solve pairwise up the tier chain.
        #[arg(long)]
        multi_tier: bool,
        /// Never fall back to the heuristic.
        #[arg(long)]
        exact_only: bool,
    },
    /// Run the discrete-event simulation and write CSV results.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        dynamic: Option<Switch>,
        #[arg(long, env = OUT_DIR_ENV, default_value = "edgecut-out")]
        out: PathBuf,
        /// Independent runs over `A..B` or `A..=B`, one directory per seed.
        #[arg(long, value_parser = parse_seed_range, conflicts_with = "seed")]
        seed_range: Option<(u64, u64)>,
        /// Also write metrics.csv with the monitor's view at each tick.
        #[arg(long)]
        metrics: bool,
    },
    /// Monthly cost of the scenario's deployment plans.
    Cost {
        scenario: PathBuf,
        /// Print only the CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Placement decision with the traces evaluated at one instant.
    Replay {
        scenario: PathBuf,
        #[arg(long)]
        at: f64,
        #[arg(long)]
        multi_tier: bool,
        #[arg(long)]
        exact_only: bool,
    },
    /// Process the scenario's deploy requests.
    Deploy { scenario: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out: Output = match cli.command {
        Command::Partition { scenario, multi_tier, exact_only } => {
            cmd_partition(&scenario, SolveFlags { multi_tier, exact_only })
        }
        Command::Simulate { scenario, duration, seed, dynamic, out, seed_range, metrics } => {
            let args = SimulateArgs {
                duration_s: duration,
                seed,
                dynamic: dynamic.map(|d| matches!(d, Switch::On)),
                out,
                seed_range,
                metrics,
            };
            cmd_simulate(&scenario, &args)
        }
        Command::Cost { scenario, csv } => cmd_cost(&scenario, csv),
        Command::Replay { scenario, at, multi_tier, exact_only } => {
            cmd_replay(&scenario, at, SolveFlags { multi_tier, exact_only })
        }
        Command::Deploy { scenario } => cmd_deploy(&scenario, SolveFlags::default()),
    };
    print!("{}", out.stdout);
    eprint!("{}", out.stderr);
    ExitCode::from(out.code as u8)
}
