mod common;

use mfcache::simulator::{
    empirical_measure, run_simulation, run_simulation_with, AgentState, BaselinePolicy,
    ConstantPolicy, FieldPolicy, Policy, SimOptions,
};
use mfcache::solver::{
    hjb_backward, initial_density, solve_mfg, DensityField, Field, FileProblem, Grid,
    MeanFieldStats,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn agent(id: usize, s: f64) -> AgentState {
    AgentState {
        id,
        position: (0.0, 0.0),
        channel_h: 1.0,
        cache_s: vec![s],
        serving: None,
    }
}

#[test]
fn full_caches_serve_everything() {
    // A full 8x8 lattice with unit spacing: every point is within 0.75 of some SBS.
    let sc = common::small(&[
        "storage.sigma_s=0.0",
        "sim.num_agents=64",
        "sim.coverage_radius=0.75",
        "sim.request_rate=0.5",
        "radio.bandwidth=1000.0",
    ]);
    let options = SimOptions {
        initial_fraction: Some(1.0),
        ..SimOptions::default()
    };
    let out = run_simulation_with(&sc, &ConstantPolicy(1.0), 3, &options).unwrap();
    assert!(out.metrics.num_requests > 100);
    assert_eq!(out.metrics.served_fraction, 1.0);
    assert_eq!(out.metrics.backhaul_bits, 0.0);
}

#[test]
fn empty_caches_without_downloads_serve_nothing() {
    let sc = common::small(&["storage.sigma_s=0.0", "sim.coverage_radius=10.0"]);
    let options = SimOptions {
        initial_fraction: Some(0.0),
        ..SimOptions::default()
    };
    let m = run_simulation_with(&sc, &ConstantPolicy(0.0), 3, &options)
        .unwrap()
        .metrics;
    assert!(m.num_requests > 100);
    assert_eq!(m.served_fraction, 0.0);
    assert_eq!(m.backhaul_bits, m.requested_bits);
}

#[test]
fn fixed_seed_is_bit_identical() {
    let sc = common::small(&[]);
    let policy = ConstantPolicy(0.2);
    let a = run_simulation(&sc, &policy, 11).unwrap();
    let b = run_simulation(&sc, &policy, 11).unwrap();
    assert_eq!(a, b);
    let c = run_simulation(&sc, &policy, 12).unwrap();
    assert_ne!(a, c);
}

#[test]
fn every_request_is_fully_accounted() {
    let sc = common::small(&["sim.coverage_radius=1.5"]);
    let m = run_simulation(&sc, &ConstantPolicy(0.3), 5).unwrap();
    assert!(m.uncovered_requests > 0 && m.uncovered_requests < m.num_requests);
    for r in &m.requests {
        assert!((r.cache_bits + r.backhaul_bits - r.size).abs() <= 1e-12);
        assert!(r.cache_bits >= 0.0 && r.backhaul_bits >= 0.0);
    }
    assert!((0.0..=1.0).contains(&m.served_fraction));
    assert!((m.cache_bits + m.backhaul_bits - m.requested_bits).abs() < 1e-9);
}

#[test]
fn occupancy_bins_cover_the_horizon() {
    let sc = common::small(&[]);
    let options = SimOptions {
        trajectory_every: 30,
        ..SimOptions::default()
    };
    let out = run_simulation_with(&sc, &ConstantPolicy(0.1), 1, &options).unwrap();
    assert_eq!(out.metrics.occupancy.len(), 6);
    assert!(out
        .metrics
        .occupancy
        .iter()
        .flatten()
        .all(|x| (0.0..=1.0).contains(x)));
    // 300 simulation steps, a row per agent and file every 30 steps.
    assert_eq!(out.trajectories.len(), 11 * 50 * 2);
    for a in &out.agents {
        assert!(a.cache_s.iter().all(|s| (0.0..=1.0).contains(s)));
    }
}

#[test]
fn measured_closure_runs() {
    let sc = common::small(&["sim.zeta_closure=\"measured\""]);
    let m = run_simulation(&sc, &ConstantPolicy(0.2), 2).unwrap();
    assert!(m.served_fraction > 0.0);
}

#[test]
fn served_fraction_falls_with_spacing() {
    let base = common::small(&["sim.num_agents=100"]);
    let policy = ConstantPolicy(0.3);
    let mut last = f64::INFINITY;
    for spacing in [1.0, 2.0, 3.0, 4.0, 5.0] {
        let mut sc = base.clone();
        sc.sim.spacing_units = spacing;
        let mean = (0..3)
            .map(|seed| run_simulation(&sc, &policy, seed).unwrap().served_fraction)
            .sum::<f64>()
            / 3.0;
        assert!(mean <= last, "spacing {spacing}: {mean} > {last}");
        last = mean;
    }
}

#[test]
fn policy_must_cover_the_horizon() {
    let short = common::small(&["grid.num_time_steps=600", "horizon_hours=3.0"]);
    let sol = solve_mfg(&short).unwrap();
    let policy = FieldPolicy::from_solution(&sol);
    let sc = common::small(&[]);
    assert!(matches!(
        run_simulation(&sc, &policy, 1),
        Err(mfcache::Error::Domain(_))
    ));
}

#[test]
fn stride_must_divide_steps() {
    let sc = common::small(&["sim.time_stride=7"]);
    assert!(matches!(
        run_simulation(&sc, &ConstantPolicy(0.0), 1),
        Err(mfcache::Error::Invalid { .. })
    ));
}

#[test]
fn empirical_measure_examples() {
    let grid = Grid::new(1.0, 11, None, 1.0, 1);
    let same: Vec<AgentState> = (0..5).map(|i| agent(i, 0.3)).collect();
    let m = empirical_measure(&same, 1, &grid).unwrap();
    let i = grid.s.nearest(0.3);
    assert!((m[(i, 0)] * grid.cell_volume(i, 0) - 1.0).abs() < 1e-12);
    assert!((grid.mass(m.view()) - 1.0).abs() < 1e-12);

    let ends = [agent(0, 0.0), agent(1, 1.0)];
    let m = empirical_measure(&ends, 1, &grid).unwrap();
    assert!((m[(0, 0)] * grid.cell_volume(0, 0) - 0.5).abs() < 1e-12);
    assert!((m[(10, 0)] * grid.cell_volume(10, 0) - 0.5).abs() < 1e-12);

    assert!(empirical_measure(&[], 1, &grid).is_err());
}

#[test]
fn empirical_measure_of_iid_sample_approaches_density() {
    let grid = Grid::new(1.0, 101, None, 1.0, 1);
    let target = grid.truncated_normal(0.4, 0.15);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let agents: Vec<AgentState> = (0..100_000)
        .map(|i| {
            let s = loop {
                let z: f64 = rng.sample(StandardNormal);
                let x = 0.4 + 0.15 * z;
                if (0.0..=1.0).contains(&x) {
                    break x;
                }
            };
            agent(i, s)
        })
        .collect();
    let m = empirical_measure(&agents, 1, &grid).unwrap();
    let l1 = mfcache::solver::l1_distance(&grid, m.view(), target.view()).unwrap();
    assert!(l1 <= 0.05, "L1 {l1}");
}

fn constant_flow(grid: &Grid, slice: &ndarray::Array2<f64>) -> DensityField {
    let mut f = Field::zeros(grid);
    for n in 0..=grid.num_steps {
        f.slice_mut(n).assign(slice);
    }
    DensityField(f)
}

#[test]
fn baseline_matches_equilibrium_response_for_stationary_mean_field() {
    let sc = common::small(&[]);
    let grids: Vec<Grid> = (1..=2).map(|k| Grid::for_file(&sc, k).unwrap()).collect();
    let flows: Vec<DensityField> = grids
        .iter()
        .map(|g| constant_flow(g, &g.truncated_normal(0.25, 0.1)))
        .collect();
    let baseline = BaselinePolicy::from_history(&sc, Some(&flows)).unwrap();
    let stats = MeanFieldStats::from_densities(&sc, &grids, &flows).unwrap();
    for (idx, grid) in grids.iter().enumerate() {
        let problem = FileProblem::build(&sc, idx + 1, grid.clone(), &stats).unwrap();
        let (_, policy) = hjb_backward(&problem).unwrap();
        assert_eq!(baseline.fields().field(idx + 1).unwrap(), &policy);
    }
}

#[test]
fn baseline_without_history_uses_initial_density() {
    let sc = common::small(&[]);
    let baseline = BaselinePolicy::from_history(&sc, None).unwrap();
    for (k, m) in baseline.mean_density.iter().enumerate() {
        let grid = Grid::for_file(&sc, k + 1).unwrap();
        assert_eq!(m, &initial_density(&sc, &grid));
    }
    let zero_window = common::small(&["sim.baseline_window_hours=0.0"]);
    let sol = solve_mfg(&zero_window).unwrap();
    let b = BaselinePolicy::from_history(&zero_window, Some(&sol.densities())).unwrap();
    assert_eq!(b.mean_density, baseline.mean_density);
    assert_eq!(b.name(), "baseline");
}

#[test]
fn baseline_freezes_varying_popularity_at_its_average() {
    let sc = common::shipped("fig3_lvp.scenario");
    let sc = mfcache::scenario::Scenario {
        grid: mfcache::scenario::GridConfig {
            num_s_points: 41,
            ..sc.grid.clone()
        },
        ..sc
    };
    let b = BaselinePolicy::from_history(&sc, None).unwrap();
    assert!((b.mean_popularity.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // Each rank is held for a quarter of the day, so the average is close to uniform.
    assert!(b.mean_popularity.iter().all(|p| (p - 0.25).abs() < 0.02));
}
