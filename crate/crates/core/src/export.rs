//! CSV writers. Every file has a header row, `,` delimiters and numbers in
//! Rust's shortest round-trip formatting, so identical inputs give
//! byte-identical output.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::simulator::TrajectoryRow;
use crate::solver::MfgSolution;

/// Time slices written per file by [`write_solution_csv`] (plus the last).
pub const SOLUTION_TIME_ROWS: usize = 96;

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Steps written for a horizon of `num_steps`: every `stride`-th one and the last.
pub fn sampled_steps(num_steps: usize, rows: usize) -> Vec<usize> {
    let stride = (num_steps / rows.max(1)).max(1);
    let mut steps: Vec<usize> = (0..=num_steps).step_by(stride).collect();
    if steps.last() != Some(&num_steps) {
        steps.push(num_steps);
    }
    steps
}

/// `file_id,t,s[,h],m,v,n_star` on a thinned time grid.
pub fn write_solution_csv(path: &Path, solution: &MfgSolution) -> Result<()> {
    let mut w = writer(path)?;
    let dynamic = solution.files.first().is_some_and(|f| f.grid.h.is_some());
    let mut header = vec!["file_id", "t", "s"];
    if dynamic {
        header.push("h");
    }
    header.extend(["m", "v", "n_star"]);
    w.write_record(&header)?;
    for f in &solution.files {
        let grid = &f.grid;
        for n in sampled_steps(grid.num_steps, SOLUTION_TIME_ROWS) {
            let (m, v, c) = (f.density.slice(n), f.value.slice(n), f.policy.slice(n));
            for i in 0..grid.ns() {
                for j in 0..grid.nh() {
                    let mut row = vec![f.k.to_string(), num(grid.time(n)), num(grid.s.points[i])];
                    if let Some(axis) = &grid.h {
                        row.push(num(axis.points[j]));
                    }
                    row.extend([num(m[(i, j)]), num(v[(i, j)]), num(c[(i, j)])]);
                    w.write_record(&row)?;
                }
            }
        }
    }
    finish(w, path)
}

/// `iteration,l1_change`.
pub fn write_diagnostics_csv(path: &Path, solution: &MfgSolution) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["iteration", "l1_change"])?;
    for (i, c) in solution.l1_changes.iter().enumerate() {
        w.write_record([(i + 1).to_string(), num(*c)])?;
    }
    finish(w, path)
}

/// `t,file_id,popularity,mean_cached_fraction,zeta_bar` at every step.
pub fn write_mean_field_csv(
    path: &Path,
    scenario: &Scenario,
    solution: &MfgSolution,
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "t",
        "file_id",
        "popularity",
        "mean_cached_fraction",
        "zeta_bar",
    ])?;
    let steps = scenario.grid.num_time_steps;
    for n in 0..=steps {
        let t = scenario.time_at(n);
        let p = scenario.popularity_vector(t)?;
        for (idx, phi) in solution.stats.phi.iter().enumerate() {
            w.write_record([
                num(t),
                (idx + 1).to_string(),
                num(p[idx]),
                num(phi[n]),
                num(solution.stats.zeta_bar[n]),
            ])?;
        }
    }
    finish(w, path)
}

/// One simulation run as reported in the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario_id: String,
    pub policy: String,
    pub spacing_units: f64,
    pub seed: u64,
    pub served_fraction: f64,
    pub backhaul_bits: f64,
    pub mean_l1_to_meanfield: Option<f64>,
}

/// `scenario_id,policy,spacing_units,seed,served_fraction,backhaul_bits,mean_l1_to_meanfield`;
/// the last column is empty when no mean field was compared.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "scenario_id",
        "policy",
        "spacing_units",
        "seed",
        "served_fraction",
        "backhaul_bits",
        "mean_l1_to_meanfield",
    ])?;
    for r in rows {
        w.write_record([
            r.scenario_id.clone(),
            r.policy.clone(),
            num(r.spacing_units),
            r.seed.to_string(),
            num(r.served_fraction),
            num(r.backhaul_bits),
            r.mean_l1_to_meanfield.map(num).unwrap_or_default(),
        ])?;
    }
    finish(w, path)
}

/// `t,agent,file_id,s,h`.
pub fn write_trajectories_csv(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "agent", "file_id", "s", "h"])?;
    for r in rows {
        w.write_record([
            num(r.t),
            r.agent.to_string(),
            r.file.to_string(),
            num(r.s),
            num(r.h),
        ])?;
    }
    finish(w, path)
}

/// Aggregate of one (regime, spacing, policy) cell of the fig3 sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Row {
    pub regime: String,
    pub spacing_units: f64,
    pub policy: String,
    pub mean_served_fraction: f64,
    /// Standard error over seeds; 0 with a single seed.
    pub std_error: f64,
    pub num_seeds: usize,
    /// `100 (mfg - baseline) / baseline` at the same regime and spacing.
    pub improvement_pct: f64,
}

/// `regime,spacing_units,policy,mean_served_fraction,std_error,num_seeds,improvement_pct`.
pub fn write_fig3_csv(path: &Path, rows: &[Fig3Row]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "regime",
        "spacing_units",
        "policy",
        "mean_served_fraction",
        "std_error",
        "num_seeds",
        "improvement_pct",
    ])?;
    for r in rows {
        w.write_record([
            r.regime.clone(),
            num(r.spacing_units),
            r.policy.clone(),
            num(r.mean_served_fraction),
            num(r.std_error),
            r.num_seeds.to_string(),
            num(r.improvement_pct),
        ])?;
    }
    finish(w, path)
}

/// Outcome of one validation check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub metric: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// `check,metric,threshold,pass`.
pub fn write_report_csv(path: &Path, rows: &[CheckRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["check", "metric", "threshold", "pass"])?;
    for r in rows {
        w.write_record([
            r.check.clone(),
            num(r.metric),
            num(r.threshold),
            r.pass.to_string(),
        ])?;
    }
    finish(w, path)
}

/// Write `text` to `path`.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
