use ndarray::{Array2, ArrayView2};

use crate::costs::MASS_TOL;
use crate::error::{Error, Result};
use crate::solver::grid::{DensityField, Field, PolicyField};
use crate::solver::problem::{check_cfl, FileProblem};

/// Advance the density one explicit step in conservative form.
///
/// Works on node masses `P = m · volume`: the net flux across the face
/// between nodes `i` and `i+1` is `P_i up_i - P_{i+1} down_{i+1}`, with the
/// same upwind rates the HJB sweep uses. Boundary faces carry no flux.
pub(crate) fn fpk_step(
    problem: &FileProblem,
    removal: f64,
    control: ArrayView2<f64>,
    m: ArrayView2<f64>,
) -> Array2<f64> {
    let grid = &problem.grid;
    let (ns, nh) = (grid.ns(), grid.nh());
    let dt = grid.dt();
    let q = grid.q;

    let mut mass = Vec::with_capacity(ns * nh);
    for (i, row) in m.outer_iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            mass.push(v * grid.cell_volume(i, j));
        }
    }
    let mut out = mass.clone();

    for j in 0..nh {
        let mut prev_up = 0.0;
        for i in 0..ns {
            let (up, down) = problem.s_rates(i, control[(i, j)] * q - removal);
            if i > 0 {
                let flux = mass[(i - 1) * nh + j] * prev_up - mass[i * nh + j] * down;
                out[(i - 1) * nh + j] -= dt * flux;
                out[i * nh + j] += dt * flux;
            }
            prev_up = up;
        }
    }
    if nh > 1 {
        let rates: Vec<(f64, f64)> = (0..nh).map(|j| problem.h_rates(j)).collect();
        for i in 0..ns {
            for j in 0..nh - 1 {
                let flux = mass[i * nh + j] * rates[j].0 - mass[i * nh + j + 1] * rates[j + 1].1;
                out[i * nh + j] -= dt * flux;
                out[i * nh + j + 1] += dt * flux;
            }
        }
    }
    Array2::from_shape_fn((ns, nh), |(i, j)| out[i * nh + j] / grid.cell_volume(i, j))
}

pub(crate) fn check_density(problem: &FileProblem, m: ArrayView2<f64>, what: &str) -> Result<()> {
    let mass = problem.grid.mass(m);
    if (mass - 1.0).abs() > MASS_TOL || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "{what} for file {} is not a normalized density (mass {mass})",
            problem.k
        )));
    }
    Ok(())
}

/// Largest total jump rate of the policy-driven dynamics over the horizon.
fn policy_max_rate(problem: &FileProblem, policy: &PolicyField) -> f64 {
    let grid = &problem.grid;
    let mut max_rate: f64 = 0.0;
    let h_rates: Vec<(f64, f64)> = (0..grid.nh()).map(|j| problem.h_rates(j)).collect();
    for n in 0..grid.num_steps {
        let slice = policy.slice(n);
        for ((i, j), c) in slice.indexed_iter() {
            let (u, d) = problem.s_rates(i, c * grid.q - problem.removal[n]);
            max_rate = max_rate.max(u + d + h_rates[j].0 + h_rates[j].1);
        }
    }
    max_rate
}

/// Forward sweep of the FPK equation for one file under a fixed policy.
pub fn fpk_forward(
    policy: &PolicyField,
    rho0: ArrayView2<f64>,
    problem: &FileProblem,
) -> Result<DensityField> {
    let grid = &problem.grid;
    if policy.0.data.shape() != [grid.num_steps + 1, grid.ns(), grid.nh()] {
        return Err(Error::GridMismatch(format!(
            "policy shape {:?} does not match grid of file {}",
            policy.0.data.shape(),
            problem.k
        )));
    }
    check_density(problem, rho0, "initial density")?;
    check_cfl(
        grid,
        policy_max_rate(problem, policy),
        &format!("FPK sweep, file {}", problem.k),
    )?;

    let mut field = Field::zeros(grid);
    field.slice_mut(0).assign(&rho0);
    let mut cur = rho0.to_owned();
    for n in 0..grid.num_steps {
        let next = fpk_step(problem, problem.removal[n], policy.slice(n), cur.view());
        field.slice_mut(n + 1).assign(&next);
        cur = next;
    }
    Ok(DensityField(field))
}
