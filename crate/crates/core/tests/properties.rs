use mfcache::costs::{CostParams, StepCost};
use mfcache::scenario::{
    ControlRule, Keyframe, PopularityKind, PopularitySchedule, RedundancyForm,
};
use mfcache::simulator::{empirical_measure, place_sbs, torus_distance, AgentState};
use mfcache::solver::{
    control_cap, fpk_forward, hjb_backward, optimal_control, optimal_control_with, Field,
    FileProblem, Grid, PolicyField,
};
use proptest::prelude::*;

fn sums_to_one(p: &[f64]) -> bool {
    (p.iter().sum::<f64>() - 1.0).abs() < 1e-12 && p.iter().all(|x| *x >= 0.0)
}

fn problem(
    grid: &Grid,
    sigma: f64,
    removal: f64,
    costs: Vec<StepCost>,
    terminal: Vec<f64>,
) -> FileProblem {
    FileProblem::assemble(
        1,
        grid.clone(),
        sigma,
        None,
        vec![removal; grid.num_steps + 1],
        costs,
        terminal,
        ControlRule::FirstOrder,
    )
}

fn params(rho1: f64, rho2: f64) -> CostParams {
    CostParams {
        rho1,
        rho2,
        nu: 0.0,
        omega: 0.0,
        terminal_c: 0.0,
        terminal_lambda_min: 0.0,
        hinge_penalties: false,
        redundancy_form: RedundancyForm::OwnState,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zipf_is_a_non_increasing_distribution(n in 1usize..30, beta in 0.0f64..3.0) {
        let schedule = PopularitySchedule { kind: PopularityKind::StaticZipf, zipf_beta: beta, ..Default::default() };
        let p = schedule.vector_at(0.0, n);
        prop_assert!(sums_to_one(&p));
        prop_assert!(p.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn sinusoidal_popularity_is_a_distribution(n in 1usize..10, beta in 0.0f64..2.0, a in 0.0f64..0.99, t in 0.0f64..48.0) {
        let schedule = PopularitySchedule {
            kind: PopularityKind::Sinusoidal,
            zipf_beta: beta,
            amplitude: a,
            ..Default::default()
        };
        prop_assert!(sums_to_one(&schedule.vector_at(t, n)));
    }

    #[test]
    fn interpolated_popularity_is_a_distribution(
        w0 in prop::collection::vec(0.01f64..5.0, 3),
        w1 in prop::collection::vec(0.01f64..5.0, 3),
        t in -1.0f64..3.0,
    ) {
        let schedule = PopularitySchedule {
            kind: PopularityKind::PiecewiseLinear,
            keyframes: vec![
                Keyframe { time_hours: 0.0, weights: w0 },
                Keyframe { time_hours: 2.0, weights: w1 },
            ],
            ..Default::default()
        };
        prop_assert!(sums_to_one(&schedule.vector_at(t, 3)));
    }

    #[test]
    fn control_stays_in_the_admissible_set(dv in -1e6f64..1e6, q in 0.05f64..5.0, b in 0.01f64..5.0) {
        let cap = control_cap(q, b);
        for rule in [ControlRule::FirstOrder, ControlRule::Proposition] {
            let n = optimal_control_with(rule, dv, q, b);
            prop_assert!((0.0..=cap).contains(&n));
            prop_assert!(q * n < b);
        }
    }

    #[test]
    fn control_grows_with_value_decrease(a in -100.0f64..0.0, b in -100.0f64..0.0, q in 0.1f64..2.0, budget in 0.1f64..2.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(optimal_control(lo, q, budget) >= optimal_control(hi, q, budget));
    }

    #[test]
    fn fpk_conserves_mass_under_random_policies(
        controls in prop::collection::vec(0.0f64..1.0, 21),
        removal in 0.0f64..0.5,
        sigma in 0.0f64..0.2,
        mean in 0.0f64..1.0,
    ) {
        let grid = Grid::new(1.0, 21, None, 1.0, 400);
        let mut f = Field::zeros(&grid);
        for n in 0..=grid.num_steps {
            for (i, c) in controls.iter().enumerate() {
                f.slice_mut(n)[(i, 0)] = *c;
            }
        }
        let rho0 = grid.truncated_normal(mean, 0.2);
        let out = fpk_forward(&PolicyField(f), rho0.view(), &problem(&grid, sigma, removal, Vec::new(), vec![0.0; 21])).unwrap();
        for n in 0..=grid.num_steps {
            let m = out.slice(n);
            prop_assert!((grid.mass(m) - 1.0).abs() < 1e-10);
            prop_assert!(m.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn hjb_policy_is_admissible(
        terminal in prop::collection::vec(-5.0f64..5.0, 11),
        rho1 in 0.0f64..20.0,
        rho2 in 0.0f64..5.0,
        budget in 0.2f64..2.0,
    ) {
        let grid = Grid::new(1.0, 11, None, 1.0, 200);
        let cost = StepCost::new(params(rho1, rho2), 1.0, budget, 1.0, 0.3, 0.5, 0.0).unwrap();
        let p = problem(&grid, 0.1, 0.2, vec![cost; grid.num_steps], terminal);
        let (value, policy) = hjb_backward(&p).unwrap();
        let cap = control_cap(1.0, budget);
        prop_assert!(policy.0.data.iter().all(|n| (0.0..=cap).contains(n)));
        prop_assert!(value.0.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn empirical_measure_has_unit_mass(states in prop::collection::vec(0.0f64..=2.0, 1..200)) {
        let grid = Grid::new(2.0, 33, None, 1.0, 1);
        let agents: Vec<AgentState> = states
            .iter()
            .enumerate()
            .map(|(id, &s)| AgentState { id, position: (0.0, 0.0), channel_h: 1.0, cache_s: vec![s], serving: None })
            .collect();
        let m = empirical_measure(&agents, 1, &grid).unwrap();
        prop_assert!((grid.mass(m.view()) - 1.0).abs() < 1e-12);
        prop_assert!(m.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn lattice_placement_is_deterministic_and_spaced(n in 1usize..300, spacing in 0.1f64..10.0) {
        let a = place_sbs(n, spacing);
        prop_assert_eq!(&a, &place_sbs(n, spacing));
        prop_assert_eq!(a.len(), n);
        let side = (n as f64).sqrt().ceil() * spacing;
        for (i, p) in a.iter().enumerate() {
            prop_assert!(p.0 >= 0.0 && p.0 < side && p.1 >= 0.0 && p.1 < side);
            if let Some(next) = a.get(i + 1) {
                prop_assert!(torus_distance(*p, *next, side) >= spacing * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn torus_distance_is_a_bounded_symmetric_metric(
        ax in 0.0f64..5.0, ay in 0.0f64..5.0, bx in 0.0f64..5.0, by in 0.0f64..5.0,
    ) {
        let d = torus_distance((ax, ay), (bx, by), 5.0);
        prop_assert!((d - torus_distance((bx, by), (ax, ay), 5.0)).abs() < 1e-12);
        prop_assert!(d <= 5.0 * std::f64::consts::FRAC_1_SQRT_2 + 1e-12);
        prop_assert!(d <= ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt() + 1e-12);
    }
}
