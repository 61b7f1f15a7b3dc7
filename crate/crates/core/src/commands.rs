//! Experiment commands behind the command-line runner.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::error::Error;
use crate::export::{
    write_diagnostics_csv, write_fig3_csv, write_mean_field_csv, write_metrics_csv,
    write_report_csv, write_solution_csv, write_text, write_trajectories_csv, Fig3Row, MetricsRow,
};
use crate::scenario::{load_scenario_with, Scenario};
use crate::simulator::{run_simulation_with, BaselinePolicy, FieldPolicy, Policy, SimOptions};
use crate::solver::{solve_mfg, MfgSolution};
use crate::validation;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Simulate,
    Fig2,
    Fig3,
    Validate,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub command: Command,
    /// Scenario files. `fig3` takes the LVP and SVP scenarios; `validate`
    /// falls back to its built-in scenario when empty.
    pub scenarios: Vec<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    /// Dotted `key=value` scenario overrides.
    pub overrides: Vec<String>,
    /// Worker threads for the fig3 sweep (default: all cores).
    pub jobs: Option<usize>,
    /// Dump agent states every this many simulation steps (0: off).
    pub trajectory_every: usize,
}

impl ExperimentSpec {
    pub fn new(command: Command, scenarios: Vec<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            command,
            scenarios,
            out: out.into(),
            seed: None,
            overrides: Vec::new(),
            jobs: None,
            trajectory_every: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Input(#[from] Error),
    #[error("fixed point did not converge: {0}")]
    NotConverged(String),
    #[error("validation failed: {0}")]
    ValidationFailed(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Input(_) => EXIT_INPUT,
            CommandError::NotConverged(_) => EXIT_NOT_CONVERGED,
            CommandError::ValidationFailed(_) => EXIT_VALIDATION,
        }
    }
}

pub type CommandResult = std::result::Result<(), CommandError>;

/// Run `spec` and map the outcome to a process exit code, reporting
/// failures on stderr.
pub fn run(spec: &ExperimentSpec) -> i32 {
    let result = match spec.command {
        Command::Solve => cmd_solve(spec),
        Command::Simulate => cmd_simulate(spec),
        Command::Fig2 => cmd_fig2(spec),
        Command::Fig3 => cmd_fig3(spec),
        Command::Validate => cmd_validate(spec),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn prepare_out(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn single_scenario(spec: &ExperimentSpec) -> Result<Scenario, Error> {
    match spec.scenarios.as_slice() {
        [path] => load_scenario_with(path, &spec.overrides),
        [] => Err(Error::Parse(
            "a scenario file is required (--scenario PATH)".into(),
        )),
        _ => Err(Error::Parse(
            "this command takes exactly one scenario".into(),
        )),
    }
}

fn seed_of(spec: &ExperimentSpec, scenario: &Scenario) -> u64 {
    spec.seed.unwrap_or(scenario.sim.seed)
}

fn solve_and_write(
    spec: &ExperimentSpec,
    scenario: &Scenario,
) -> Result<MfgSolution, CommandError> {
    prepare_out(&spec.out)?;
    let solution = solve_mfg(scenario)?;
    write_solution_csv(&spec.out.join("solution.csv"), &solution)?;
    write_diagnostics_csv(&spec.out.join("diagnostics.csv"), &solution)?;
    write_mean_field_csv(&spec.out.join("mean_field.csv"), scenario, &solution)?;
    Ok(solution)
}

fn convergence(solution: &MfgSolution, scenario: &Scenario) -> CommandResult {
    if solution.converged {
        Ok(())
    } else {
        Err(CommandError::NotConverged(format!(
            "L1 change {:e} after {} iterations (tol {:e})",
            solution.l1_changes.last().copied().unwrap_or(f64::NAN),
            solution.iterations,
            scenario.solver.tol
        )))
    }
}

/// Solve the equilibrium; writes `solution.csv`, `diagnostics.csv` and
/// `mean_field.csv`.
pub fn cmd_solve(spec: &ExperimentSpec) -> CommandResult {
    let scenario = single_scenario(spec)?;
    let solution = solve_and_write(spec, &scenario)?;
    convergence(&solution, &scenario)
}

/// Pearson correlation of two equal-length series.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Per-file `(correlation of popularity with mean cached fraction, peak
/// mean cached fraction)` over the horizon.
pub fn fig2_summary(scenario: &Scenario, solution: &MfgSolution) -> Result<Vec<(f64, f64)>, Error> {
    let steps = scenario.grid.num_time_steps;
    (1..=scenario.num_files())
        .map(|k| {
            let phi = solution.mean_cached_fraction(k)?;
            let pop = (0..=steps)
                .map(|n| scenario.popularity_at(scenario.time_at(n), k))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((
                pearson(&pop, phi),
                phi.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ))
        })
        .collect()
}

/// `solve` plus `fig2_summary.csv` with the popularity/occupancy statistics.
pub fn cmd_fig2(spec: &ExperimentSpec) -> CommandResult {
    let scenario = single_scenario(spec)?;
    let solution = solve_and_write(spec, &scenario)?;
    let mut text =
        String::from("file_id,popularity_correlation,peak_mean_cached_fraction,capacity\n");
    for (k, (corr, peak)) in fig2_summary(&scenario, &solution)?.into_iter().enumerate() {
        text.push_str(&format!(
            "{},{corr},{peak},{}\n",
            k + 1,
            scenario.storage.capacity
        ));
    }
    write_text(&spec.out.join("fig2_summary.csv"), &text)?;
    convergence(&solution, &scenario)
}

/// Solve, then simulate the equilibrium and the baseline policy at the
/// scenario's spacing; writes `metrics.csv` (and `trajectories_*.csv` when
/// requested) next to the solution files.
pub fn cmd_simulate(spec: &ExperimentSpec) -> CommandResult {
    let scenario = single_scenario(spec)?;
    let solution = solve_and_write(spec, &scenario)?;
    let seed = seed_of(spec, &scenario);
    let densities = solution.densities();
    let mfg = FieldPolicy::from_solution(&solution);
    let baseline = BaselinePolicy::from_history(&scenario, Some(&densities))?;
    let policies: [&dyn Policy; 2] = [&mfg, &baseline];
    let options = SimOptions {
        trajectory_every: spec.trajectory_every,
        ..SimOptions::against(&scenario, &densities)
    };
    let mut rows = Vec::new();
    for policy in policies {
        let out = run_simulation_with(&scenario, policy, seed, &options)?;
        if spec.trajectory_every > 0 {
            write_trajectories_csv(
                &spec.out.join(format!("trajectories_{}.csv", policy.name())),
                &out.trajectories,
            )?;
        }
        rows.push(MetricsRow {
            scenario_id: scenario.id.clone(),
            policy: policy.name().to_string(),
            spacing_units: scenario.sim.spacing_units,
            seed,
            served_fraction: out.metrics.served_fraction,
            backhaul_bits: out.metrics.backhaul_bits,
            mean_l1_to_meanfield: out.metrics.mean_l1_to_meanfield,
        });
    }
    write_metrics_csv(&spec.out.join("metrics.csv"), &rows)?;
    convergence(&solution, &scenario)
}

/// Aggregated fig3 results plus every individual run.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Output {
    pub table: Vec<Fig3Row>,
    pub runs: Vec<MetricsRow>,
    /// Regimes whose fixed point did not converge.
    pub unconverged: Vec<String>,
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// The fig3 sweep: spacing × policy × seed for each scenario, cells run on
/// a pool of `jobs` threads and assembled in a fixed order.
pub fn run_fig3(
    scenarios: &[Scenario],
    base_seed: Option<u64>,
    jobs: Option<usize>,
) -> Result<Fig3Output, Error> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    pool.install(|| {
        let mut table = Vec::new();
        let mut runs = Vec::new();
        let mut unconverged = Vec::new();
        for scenario in scenarios {
            let regime = scenario
                .popularity
                .variability
                .map_or_else(|| scenario.id.clone(), |v| v.label().to_string());
            let solution = solve_mfg(scenario)?;
            if !solution.converged {
                unconverged.push(regime.clone());
            }
            let densities = solution.densities();
            let mfg = FieldPolicy::from_solution(&solution);
            let baseline = BaselinePolicy::from_history(scenario, Some(&densities))?;
            let policies: [&dyn Policy; 2] = [&mfg, &baseline];
            let seed0 = base_seed.unwrap_or(scenario.sim.seed);
            let seeds: Vec<u64> = (0..scenario.sim.num_seeds as u64)
                .map(|i| seed0 + i)
                .collect();

            let mut cells: Vec<(f64, usize, u64)> = Vec::new();
            for &spacing in &scenario.sim.spacings {
                for p in 0..policies.len() {
                    cells.extend(seeds.iter().map(|&s| (spacing, p, s)));
                }
            }
            let results = cells
                .par_iter()
                .map(|&(spacing, p, seed)| {
                    let mut sc = scenario.clone();
                    sc.sim.spacing_units = spacing;
                    let options = SimOptions::against(&sc, &densities);
                    let metrics = run_simulation_with(&sc, policies[p], seed, &options)?.metrics;
                    Ok(MetricsRow {
                        scenario_id: scenario.id.clone(),
                        policy: policies[p].name().to_string(),
                        spacing_units: spacing,
                        seed,
                        served_fraction: metrics.served_fraction,
                        backhaul_bits: metrics.backhaul_bits,
                        mean_l1_to_meanfield: metrics.mean_l1_to_meanfield,
                    })
                })
                .collect::<Result<Vec<_>, Error>>()?;

            for &spacing in &scenario.sim.spacings {
                let stats: Vec<(f64, f64)> = (0..policies.len())
                    .map(|p| {
                        let xs: Vec<f64> = results
                            .iter()
                            .filter(|r| {
                                r.spacing_units == spacing && r.policy == policies[p].name()
                            })
                            .map(|r| r.served_fraction)
                            .collect();
                        mean_and_stderr(&xs)
                    })
                    .collect();
                let (mfg_mean, base_mean) = (stats[0].0, stats[1].0);
                let improvement = if base_mean > 0.0 {
                    100.0 * (mfg_mean - base_mean) / base_mean
                } else {
                    0.0
                };
                for (p, (mean, stderr)) in stats.into_iter().enumerate() {
                    table.push(Fig3Row {
                        regime: regime.clone(),
                        spacing_units: spacing,
                        policy: policies[p].name().to_string(),
                        mean_served_fraction: mean,
                        std_error: stderr,
                        num_seeds: seeds.len(),
                        improvement_pct: if p == 0 { improvement } else { 0.0 },
                    });
                }
            }
            runs.extend(results);
        }
        Ok(Fig3Output {
            table,
            runs,
            unconverged,
        })
    })
}

/// Default locations of the fig3 scenarios.
pub fn default_fig3_scenarios() -> Vec<PathBuf> {
    vec![
        PathBuf::from("scenarios/fig3_lvp.scenario"),
        PathBuf::from("scenarios/fig3_svp.scenario"),
    ]
}

/// The fig3 sweep; writes `fig3.csv` (aggregate) and `fig3_runs.csv`.
pub fn cmd_fig3(spec: &ExperimentSpec) -> CommandResult {
    let paths = if spec.scenarios.is_empty() {
        default_fig3_scenarios()
    } else {
        spec.scenarios.clone()
    };
    let scenarios = paths
        .iter()
        .map(|p| load_scenario_with(p, &spec.overrides))
        .collect::<Result<Vec<_>, _>>()?;
    prepare_out(&spec.out)?;
    let output = run_fig3(&scenarios, spec.seed, spec.jobs)?;
    write_fig3_csv(&spec.out.join("fig3.csv"), &output.table)?;
    write_metrics_csv(&spec.out.join("fig3_runs.csv"), &output.runs)?;
    if output.unconverged.is_empty() {
        Ok(())
    } else {
        Err(CommandError::NotConverged(format!(
            "regimes {}",
            output.unconverged.join(", ")
        )))
    }
}

/// Run the validation suites; writes `validation_report.csv`.
pub fn cmd_validate(spec: &ExperimentSpec) -> CommandResult {
    let scenario = match spec.scenarios.as_slice() {
        [] => None,
        _ => Some(single_scenario(spec)?),
    };
    prepare_out(&spec.out)?;
    let rows = validation::run_all(scenario.as_ref(), spec.seed.unwrap_or(1))?;
    write_report_csv(&spec.out.join("validation_report.csv"), &rows)?;
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.check.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CommandError::ValidationFailed(failed.join(", ")))
    }
}
