use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mfcache::commands::{run, Command, ExperimentSpec};

/// Mean-field caching game: equilibrium solver, finite-N simulator and
/// reproduction harness.
#[derive(Debug, Parser)]
#[command(name = "mfcache", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Solve the mean-field equilibrium and write the solution CSVs.
    Solve(Common),
    /// Solve, then simulate the equilibrium and baseline policies.
    Simulate(Common),
    /// Solve, then summarize how each file's cached fraction tracks its popularity.
    Fig2(Common),
    /// Served-fraction sweep over spacing, policy, regime and seed.
    Fig3(Common),
    /// Run the numerical validation suites.
    Validate(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (repeat for fig3: LVP then SVP).
    #[arg(long = "scenario", value_name = "PATH")]
    scenarios: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Master seed (defaults to the scenario's `sim.seed`).
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Scenario override as a dotted key path, e.g. `grid.num_s_points=101`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for parallel sweeps.
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Dump agent trajectories every N simulation steps.
    #[arg(long, value_name = "N", default_value_t = 0)]
    trajectories: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Solve(a) => (Command::Solve, a),
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::Fig2(a) => (Command::Fig2, a),
        Sub::Fig3(a) => (Command::Fig3, a),
        Sub::Validate(a) => (Command::Validate, a),
    };
    let spec = ExperimentSpec {
        command,
        scenarios: args.scenarios,
        out: args.out,
        seed: args.seed,
        overrides: args.overrides,
        jobs: args.jobs,
        trajectory_every: args.trajectories,
    };
    ExitCode::from(run(&spec) as u8)
}
