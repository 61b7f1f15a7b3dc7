use ndarray::{Array2, Zip};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::solver::fpk::{check_density, fpk_forward, fpk_step};
use crate::solver::grid::{l1_distance, DensityField, Field, Grid, PolicyField, ValueField};
use crate::solver::hjb::hjb_backward;
use crate::solver::problem::{zeta_bar_at, FileProblem, MeanFieldStats};

/// Equilibrium quantities of one file.
#[derive(Debug, Clone)]
pub struct FileSolution {
    /// 1-based file index.
    pub k: usize,
    pub grid: Grid,
    pub value: ValueField,
    pub density: DensityField,
    pub policy: PolicyField,
    /// Removal rate per step used by the last sweep.
    pub removal: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MfgSolution {
    pub files: Vec<FileSolution>,
    /// Sup-in-time L1 change of the density, one entry per iteration.
    pub l1_changes: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Mean-field statistics of the returned densities.
    pub stats: MeanFieldStats,
}

impl MfgSolution {
    pub fn file(&self, k: usize) -> Result<&FileSolution> {
        self.files.get(k.wrapping_sub(1)).ok_or_else(|| {
            Error::Domain(format!("file index {k} outside 1..={}", self.files.len()))
        })
    }

    /// Mean cached fraction E[s_k]/q_k at every step.
    pub fn mean_cached_fraction(&self, k: usize) -> Result<&[f64]> {
        self.file(k)?;
        Ok(&self.stats.phi[k - 1])
    }

    pub fn densities(&self) -> Vec<DensityField> {
        self.files.iter().map(|f| f.density.clone()).collect()
    }
}

/// Initial density ρ₀: truncated normal in s (parameters relative to q),
/// times the stationary channel law in h when the channel is dynamic.
pub fn initial_density(scenario: &Scenario, grid: &Grid) -> Array2<f64> {
    let q = grid.q;
    let mut m = grid.truncated_normal(scenario.initial.mean * q, scenario.initial.std * q);
    if let Some(axis) = &grid.h {
        let c = &scenario.channel;
        let sd = (c.sigma_h * c.sigma_h / (4.0 * c.alpha)).sqrt();
        for j in 0..axis.len() {
            let z = (axis.points[j] - c.mu_h) / sd;
            let w = (-0.5 * z * z).exp();
            m.column_mut(j).mapv_inplace(|x| x * w);
        }
        let mass = grid.mass(m.view());
        m /= mass;
    }
    m
}

fn grids_for(scenario: &Scenario) -> Result<Vec<Grid>> {
    (1..=scenario.num_files())
        .map(|k| Grid::for_file(scenario, k))
        .collect()
}

/// Joint forward sweep of every file with zero control, ζ̄ computed causally
/// from the current slices.
fn zero_control_densities(
    scenario: &Scenario,
    grids: &[Grid],
    rho0: &[Array2<f64>],
) -> Result<Vec<DensityField>> {
    let nf = grids.len();
    let steps = grids[0].num_steps;
    let blank = MeanFieldStats {
        expected_bits: vec![vec![0.0; steps + 1]; nf],
        phi: vec![vec![0.0; steps + 1]; nf],
        zeta_bar: vec![0.0; steps + 1],
    };
    let problems = grids
        .iter()
        .enumerate()
        .map(|(i, g)| FileProblem::build(scenario, i + 1, g.clone(), &blank))
        .collect::<Result<Vec<_>>>()?;
    let mut fields: Vec<Field> = grids.iter().map(Field::zeros).collect();
    let mut current: Vec<Array2<f64>> = rho0.to_vec();
    for n in 0..steps {
        let t = grids[0].time(n);
        let pop = scenario.popularity_vector(t)?;
        let zeta = {
            let views: Vec<_> = current.iter().map(|m| m.view()).collect();
            zeta_bar_at(scenario, grids, &views, &pop)
        };
        for k in 0..nf {
            fields[k].slice_mut(n).assign(&current[k]);
            let removal = scenario.storage.removal_beta * (1.0 - pop[k]) * zeta;
            let zero = grids[k].zeros_slice();
            current[k] = fpk_step(&problems[k], removal, zero.view(), current[k].view());
        }
    }
    for k in 0..nf {
        fields[k].slice_mut(steps).assign(&current[k]);
    }
    Ok(fields.into_iter().map(DensityField).collect())
}

/// Solve the mean-field equilibrium starting from the zero-control flow.
pub fn solve_mfg(scenario: &Scenario) -> Result<MfgSolution> {
    solve(scenario, None)
}

/// Solve the mean-field equilibrium starting from the density flows `guess`.
pub fn solve_mfg_from(scenario: &Scenario, guess: &[DensityField]) -> Result<MfgSolution> {
    solve(scenario, Some(guess))
}

fn solve(scenario: &Scenario, guess: Option<&[DensityField]>) -> Result<MfgSolution> {
    let grids = grids_for(scenario)?;
    let nf = grids.len();
    let rho0: Vec<Array2<f64>> = grids.iter().map(|g| initial_density(scenario, g)).collect();

    let mut densities = match guess {
        Some(g) => {
            if g.len() != nf {
                return Err(Error::GridMismatch(format!(
                    "guess has {} files, scenario {nf}",
                    g.len()
                )));
            }
            for (d, grid) in g.iter().zip(&grids) {
                let shape = [grid.num_steps + 1, grid.ns(), grid.nh()];
                if d.0.data.shape() != shape {
                    return Err(Error::GridMismatch(format!(
                        "guess density shape {:?} does not match {shape:?}",
                        d.0.data.shape()
                    )));
                }
            }
            g.to_vec()
        }
        None => zero_control_densities(scenario, &grids, &rho0)?,
    };

    let damping = scenario.solver.damping;
    let tol = scenario.solver.tol;
    let mut stats = MeanFieldStats::from_densities(scenario, &grids, &densities)?;
    let mut l1_changes = Vec::new();
    let mut converged = false;
    let mut last: Vec<(FileProblem, ValueField, PolicyField)> = Vec::new();

    for _ in 0..scenario.solver.max_iters {
        let sweeps = (0..nf)
            .into_par_iter()
            .map(|i| {
                let problem = FileProblem::build(scenario, i + 1, grids[i].clone(), &stats)?;
                check_density(&problem, rho0[i].view(), "initial density")?;
                let (value, policy) = hjb_backward(&problem)?;
                let fresh = fpk_forward(&policy, rho0[i].view(), &problem)?;
                Ok((problem, value, policy, fresh))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut change: f64 = 0.0;
        let mut next = Vec::with_capacity(nf);
        last.clear();
        for (i, (problem, value, policy, fresh)) in sweeps.into_iter().enumerate() {
            let mut damped = densities[i].0.clone();
            Zip::from(&mut damped.data)
                .and(&fresh.0.data)
                .for_each(|m, &f| *m = (1.0 - damping) * *m + damping * f);
            for n in 0..=grids[i].num_steps {
                change = change.max(l1_distance(
                    &grids[i],
                    damped.slice(n),
                    densities[i].slice(n),
                )?);
            }
            next.push(DensityField(damped));
            last.push((problem, value, policy));
        }
        densities = next;
        stats = MeanFieldStats::from_densities(scenario, &grids, &densities)?;
        l1_changes.push(change);
        if change <= tol {
            converged = true;
            break;
        }
    }

    let files = last
        .into_iter()
        .zip(densities)
        .zip(grids)
        .map(|(((problem, value, policy), density), grid)| FileSolution {
            k: problem.k,
            grid,
            value,
            density,
            policy,
            removal: problem.removal,
        })
        .collect();
    Ok(MfgSolution {
        files,
        iterations: l1_changes.len(),
        l1_changes,
        converged,
        stats,
    })
}
