use ndarray::ArrayView2;

use crate::costs::backhaul_cost;
use crate::error::{Error, Result};
use crate::solver::control::optimal_control_with;
use crate::solver::grid::{Field, PolicyField, ValueField};
use crate::solver::problem::FileProblem;

/// Gradient used for the control: centered in the interior, one-sided at
/// the two boundary nodes. Unlike a per-side upwind choice it is continuous
/// in `v`, which keeps the fixed-point map continuous.
#[inline]
pub(crate) fn control_gradient(fwd: Option<f64>, bwd: Option<f64>) -> f64 {
    match (fwd, bwd) {
        (Some(f), Some(b)) => 0.5 * (f + b),
        (Some(f), None) => f,
        (None, Some(b)) => b,
        (None, None) => 0.0,
    }
}

/// Backward sweep of the HJB equation for one file.
///
/// Explicit in time, upwind in the drift, centered in the diffusion, with
/// reflecting (no-flux) boundaries. The control at each node is the
/// closed-form minimizer of the Hamiltonian at the gradient of `v` from the
/// later step.
pub fn hjb_backward(problem: &FileProblem) -> Result<(ValueField, PolicyField)> {
    problem.check_cfl(
        problem.drift_bound(),
        &format!("HJB sweep, file {}", problem.k),
    )?;
    let grid = &problem.grid;
    let (ns, nh, steps) = (grid.ns(), grid.nh(), grid.num_steps);
    let dt = grid.dt();
    let ds = problem.ds();

    let mut value = Field::zeros(grid);
    let mut policy = Field::zeros(grid);
    // Flat `[i * nh + j]` buffers for the later and current slices.
    let mut next: Vec<f64> = (0..ns * nh).map(|idx| problem.terminal[idx / nh]).collect();
    let mut cur = vec![0.0; ns * nh];
    let mut pol = vec![0.0; ns * nh];
    value
        .slice_mut(steps)
        .assign(&ArrayView2::from_shape((ns, nh), &next).expect("terminal shape"));
    let h_rates: Vec<(f64, f64)> = (0..nh).map(|j| problem.h_rates(j)).collect();

    for n in (0..steps).rev() {
        let cost = &problem.costs[n];
        let removal = problem.removal[n];
        for i in 0..ns {
            let state_cost = cost.state_cost(grid.s.points[i]);
            for (j, &(hu, hd)) in h_rates.iter().enumerate() {
                let idx = i * nh + j;
                let v = next[idx];
                let fwd = (i + 1 < ns).then(|| (next[idx + nh] - v) / ds);
                let bwd = (i > 0).then(|| (v - next[idx - nh]) / ds);
                let control = optimal_control_with(
                    problem.rule,
                    control_gradient(fwd, bwd),
                    cost.q,
                    cost.budget,
                );
                let (up, down) = problem.s_rates(i, control * cost.q - removal);
                let mut generator = 0.0;
                if up > 0.0 {
                    generator += up * (next[idx + nh] - v);
                }
                if down > 0.0 {
                    generator += down * (next[idx - nh] - v);
                }
                if hu > 0.0 {
                    generator += hu * (next[idx + 1] - v);
                }
                if hd > 0.0 {
                    generator += hd * (next[idx - 1] - v);
                }
                let running = state_cost + backhaul_cost(control, cost.q, cost.budget);
                let updated = v + dt * (generator + running);
                if !updated.is_finite() {
                    return Err(Error::Domain(format!(
                        "value function not finite at step {n}, node ({i}, {j}) of file {}",
                        problem.k
                    )));
                }
                cur[idx] = updated;
                pol[idx] = control;
            }
        }
        value
            .slice_mut(n)
            .assign(&ArrayView2::from_shape((ns, nh), &cur).expect("slice shape"));
        policy
            .slice_mut(n)
            .assign(&ArrayView2::from_shape((ns, nh), &pol).expect("slice shape"));
        std::mem::swap(&mut next, &mut cur);
    }
    // The terminal slice carries the control of the last interior step.
    let tail = policy.slice(steps.saturating_sub(1)).to_owned();
    policy.slice_mut(steps).assign(&tail);
    Ok((ValueField(value), PolicyField(policy)))
}
