mod common;

use mfcache::costs::{CostParams, StepCost};
use mfcache::scenario::{ControlRule, RedundancyForm};
use mfcache::solver::{
    fpk_forward, hjb_backward, solve_mfg, solve_mfg_from, Field, FileProblem, Grid, PolicyField,
};
use ndarray::Array2;

fn flat_params() -> CostParams {
    CostParams {
        rho1: 0.0,
        rho2: 0.0,
        nu: 0.0,
        omega: 0.0,
        terminal_c: 0.0,
        terminal_lambda_min: 0.0,
        hinge_penalties: false,
        redundancy_form: RedundancyForm::MeanField,
    }
}

fn transport_problem(grid: &Grid, sigma: f64, removal: f64) -> FileProblem {
    FileProblem::assemble(
        1,
        grid.clone(),
        sigma,
        None,
        vec![removal; grid.num_steps + 1],
        Vec::new(),
        vec![0.0; grid.ns()],
        ControlRule::FirstOrder,
    )
}

fn constant_policy(grid: &Grid, value: f64) -> PolicyField {
    let mut f = Field::zeros(grid);
    f.data.fill(value);
    PolicyField(f)
}

#[test]
fn hjb_three_node_two_step_golden() {
    // s ∈ {0, 0.5, 1}, dt = 0.05, σ = 0.2, removal 0.1, B = q = 1,
    // redundancy ≡ 1, terminal v = (2, 1, 0).
    let grid = Grid::new(1.0, 3, None, 0.1, 2);
    let cost = StepCost::new(flat_params(), 1.0, 1.0, 0.4, 0.3, 0.5, 0.0).unwrap();
    let problem = FileProblem::assemble(
        1,
        grid,
        0.2,
        None,
        vec![0.1; 3],
        vec![cost; 2],
        vec![2.0, 1.0, 0.0],
        ControlRule::FirstOrder,
    );
    let (value, policy) = hjb_backward(&problem).unwrap();

    // Step 1: gradient -2 at every node, so n = 1 - 1/2 = 0.5 and the
    // drift is 0.4. Rates up/down: (1.76, 0), (0.88, 0.08), (0, 0.16).
    let running = 1.0 + 2f64.ln();
    let v1 = [
        2.0 + 0.05 * (1.76 * (1.0 - 2.0) + running),
        1.0 + 0.05 * (0.88 * (0.0 - 1.0) + 0.08 * (2.0 - 1.0) + running),
        0.0 + 0.05 * (0.16 * (1.0 - 0.0) + running),
    ];
    let golden1 = [1.9966573590279972, 1.0446573590279973, 0.09265735902799727];
    let golden0 = [1.9998792058464558, 1.0911752058464559, 0.18247120584645593];
    for i in 0..3 {
        assert!((v1[i] - golden1[i]).abs() < 1e-12);
        assert!(
            (value.slice(1)[(i, 0)] - golden1[i]).abs() < 1e-12,
            "step 1 node {i}"
        );
        assert!(
            (value.slice(0)[(i, 0)] - golden0[i]).abs() < 1e-12,
            "step 0 node {i}"
        );
        assert!((policy.slice(1)[(i, 0)] - 0.5).abs() < 1e-12);
        assert!((policy.slice(0)[(i, 0)] - 0.47478991596638653).abs() < 1e-12);
    }
}

#[test]
fn hjb_zero_costs_give_zero_value_and_control() {
    let grid = Grid::new(1.0, 11, None, 1.0, 50);
    // The redundancy cost cannot vanish (its floor is exp(0) = 1) and the
    // backhaul cost is -ln(1) = 0 at zero control, so v is the elapsed
    // constant cost and the control stays at zero.
    let cost = StepCost::new(flat_params(), 1.0, 1.0, 0.4, 0.0, 0.5, 0.0).unwrap();
    let problem = FileProblem::assemble(
        1,
        grid.clone(),
        0.1,
        None,
        vec![0.0; 51],
        vec![cost; 50],
        vec![0.0; 11],
        ControlRule::FirstOrder,
    );
    let (value, policy) = hjb_backward(&problem).unwrap();
    for n in 0..=50 {
        let expected = (50 - n) as f64 * grid.dt();
        for i in 0..11 {
            assert!((value.slice(n)[(i, 0)] - expected).abs() < 1e-12);
            assert_eq!(policy.slice(n)[(i, 0)], 0.0);
        }
    }
}

#[test]
fn hjb_transport_free_keeps_terminal_value() {
    let grid = Grid::new(1.0, 9, None, 1.0, 20);
    let cost = StepCost::new(flat_params(), 1.0, 1.0, 0.4, 0.0, 0.5, 0.0).unwrap();
    // Running cost is the constant 1; it is removed from the comparison.
    let terminal: Vec<f64> = grid.s.points.iter().map(|s| 3.0 * s * s).collect();
    let problem = FileProblem::assemble(
        1,
        grid.clone(),
        0.0,
        None,
        vec![0.0; 21],
        vec![cost; 20],
        terminal.clone(),
        ControlRule::FirstOrder,
    );
    let (value, _) = hjb_backward(&problem).unwrap();
    for n in 0..=20 {
        let shift = (20 - n) as f64 * grid.dt();
        for (i, g) in terminal.iter().enumerate().take(9) {
            assert!((value.slice(n)[(i, 0)] - shift - g).abs() < 1e-12);
        }
    }
}

#[test]
fn fpk_without_dynamics_keeps_initial_density() {
    let grid = Grid::new(1.0, 31, None, 2.0, 40);
    let rho0 = grid.truncated_normal(0.3, 0.1);
    let density = fpk_forward(
        &constant_policy(&grid, 0.0),
        rho0.view(),
        &transport_problem(&grid, 0.0, 0.0),
    )
    .unwrap();
    for n in 0..=40 {
        let diff = (&density.slice(n) - &rho0)
            .iter()
            .fold(0.0f64, |a, d| a.max(d.abs()));
        assert!(diff < 1e-13, "step {n}: {diff}");
    }
}

#[test]
fn fpk_diffusion_relaxes_to_uniform() {
    let grid = Grid::new(1.0, 21, None, 20.0, 4000);
    let rho0 = grid.truncated_normal(0.2, 0.05);
    let density = fpk_forward(
        &constant_policy(&grid, 0.0),
        rho0.view(),
        &transport_problem(&grid, 0.5, 0.0),
    )
    .unwrap();
    let uniform = Array2::from_elem((21, 1), 1.0);
    let l1 = mfcache::solver::l1_distance(&grid, density.0.last(), uniform.view()).unwrap();
    assert!(l1 < 1e-6, "L1 to uniform {l1}");
}

#[test]
fn fpk_constant_drift_moves_centroid_at_drift_speed() {
    let c = 0.3;
    let grid = Grid::new(1.0, 201, None, 1.0, 400);
    let rho0 = grid.truncated_normal(0.25, 0.02);
    let density = fpk_forward(
        &constant_policy(&grid, c),
        rho0.view(),
        &transport_problem(&grid, 0.0, 0.0),
    )
    .unwrap();
    let c0 = grid.expect(rho0.view(), |s, _| s);
    for n in [0, 100, 200, 400] {
        let centroid = grid.expect(density.slice(n), |s, _| s);
        let expected = c0 + c * grid.time(n);
        assert!(
            (centroid - expected).abs() < 1e-9,
            "step {n}: {centroid} vs {expected}"
        );
    }
}

#[test]
fn fpk_rejects_mismatched_policy() {
    let grid = Grid::new(1.0, 11, None, 1.0, 10);
    let other = Grid::new(1.0, 12, None, 1.0, 10);
    let rho0 = grid.truncated_normal(0.5, 0.1);
    let err = fpk_forward(
        &constant_policy(&other, 0.0),
        rho0.view(),
        &transport_problem(&grid, 0.0, 0.0),
    );
    assert!(matches!(err, Err(mfcache::Error::GridMismatch(_))));
}

#[test]
fn fpk_reports_cfl_violation() {
    let grid = Grid::new(1.0, 101, None, 1.0, 10);
    let rho0 = grid.truncated_normal(0.5, 0.1);
    let err = fpk_forward(
        &constant_policy(&grid, 1.0),
        rho0.view(),
        &transport_problem(&grid, 0.1, 0.0),
    );
    assert!(matches!(err, Err(mfcache::Error::Cfl { .. })));
}

#[test]
fn infinite_tolerance_stops_after_one_iteration() {
    let sc = common::small(&["solver.tol=inf"]);
    let sol = solve_mfg(&sc).unwrap();
    assert_eq!(sol.iterations, 1);
    assert!(sol.converged);
}

#[test]
fn restart_from_fixed_point_converges_immediately() {
    let sc = common::small(&["solver.tol=1e-7", "solver.max_iters=300"]);
    let first = solve_mfg(&sc).unwrap();
    assert!(first.converged);
    let again = solve_mfg_from(&sc, &first.densities()).unwrap();
    assert!(again.converged);
    assert!(
        again.iterations <= 2,
        "took {} iterations",
        again.iterations
    );
}

#[test]
fn restart_rejects_wrong_guess() {
    let sc = common::small(&[]);
    let sol = solve_mfg(&sc).unwrap();
    let mut guess = sol.densities();
    guess.pop();
    assert!(matches!(
        solve_mfg_from(&sc, &guess),
        Err(mfcache::Error::GridMismatch(_))
    ));
}

#[test]
fn dynamic_channel_solve_conserves_mass() {
    let sc = common::small(&[
        "channel.static_channel=false",
        "channel.sigma_h=0.4",
        "channel.alpha=2.0",
        "grid.num_s_points=21",
        "grid.num_h_points=9",
        "solver.max_iters=5",
    ]);
    let sol = solve_mfg(&sc).unwrap();
    assert!(sol.files[0].grid.h.is_some());
    assert!(mfcache::validation::mass_error(&sol) < 1e-8);
    assert!(sol
        .files
        .iter()
        .all(|f| f.density.0.data.iter().all(|m| *m >= -1e-12)));
}
