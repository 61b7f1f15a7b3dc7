//! Independent numerical oracles for the solver and simulator: particle
//! Monte Carlo for the FPK sweep, brute-force minimization of the
//! Hamiltonian, exhaustive dynamic programming for the HJB sweep, Monte Carlo
//! moments of the channel process and the finite-N convergence sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::costs::{backhaul_cost, CostParams, StepCost};
use crate::dynamics::{channel_drift, euler_step, ChannelParams};
use crate::error::Result;
use crate::export::CheckRow;
use crate::scenario::{ControlRule, RedundancyForm, Scenario};
use crate::simulator::{run_simulation_with, FieldPolicy, SimOptions};
use crate::solver::{
    control_cap, fpk_forward, hamiltonian, hjb_backward, initial_density, l1_distance,
    optimal_control, solve_mfg, FileProblem, Grid, MfgSolution,
};

pub const MASS_THRESHOLD: f64 = 1e-8;
pub const PARTICLE_L1_THRESHOLD: f64 = 0.05;
pub const CONTROL_THRESHOLD: f64 = 1e-3;
pub const DP_THRESHOLD: f64 = 0.05;
pub const OU_MEAN_THRESHOLD: f64 = 0.01;
pub const OU_VARIANCE_THRESHOLD: f64 = 0.05;

/// Desk-scale scenario used by [`run_all`] when none is given.
pub const DEFAULT_SCENARIO: &str = r#"
schema_version = 1
id = "validation"
horizon_hours = 24.0

[[files]]
id = 1
size_bits = 1.0

[[files]]
id = 2
size_bits = 1.0

[popularity]
kind = "piecewise-linear"

[[popularity.keyframes]]
time_hours = 0.0
weights = [0.1, 0.9]

[[popularity.keyframes]]
time_hours = 24.0
weights = [0.9, 0.1]

[storage]
capacity = 0.4
sigma_s = 0.1
removal_beta = 0.3

[backhaul]
budget = 1.0

[cost]
rho1 = 4.0
rho2 = 0.5
terminal_c = 10.0
terminal_lambda_min = 0.05

[grid]
num_s_points = 161
num_time_steps = 14400

[sim]
num_agents = 1000
time_stride = 4
"#;

pub fn default_scenario() -> Scenario {
    Scenario::from_toml_str(DEFAULT_SCENARIO, &[]).expect("built-in validation scenario is valid")
}

/// Largest `|∫ m - 1|` over every slice of every file.
pub fn mass_error(solution: &MfgSolution) -> f64 {
    let mut worst: f64 = 0.0;
    for f in &solution.files {
        for n in 0..f.density.0.num_slices() {
            worst = worst.max((f.grid.mass(f.density.slice(n)) - 1.0).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy)]
pub struct ParticleOptions {
    pub particles: usize,
    /// Solver steps per particle step.
    pub stride: usize,
    pub seed: u64,
}

impl Default for ParticleOptions {
    fn default() -> Self {
        Self {
            particles: 100_000,
            stride: 5,
            seed: 7,
        }
    }
}

fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let y = if x < lo {
        2.0 * lo - x
    } else if x > hi {
        2.0 * hi - x
    } else {
        x
    };
    y.clamp(lo, hi)
}

/// L1 distance between the FPK density and an Euler–Maruyama particle
/// histogram under the frozen equilibrium policy, at `T/2` and `T`.
/// Returns `(t, largest L1 over files)` per time.
pub fn fpk_vs_particles(
    scenario: &Scenario,
    solution: &MfgSolution,
    options: ParticleOptions,
) -> Result<Vec<(f64, f64)>> {
    let steps = scenario.grid.num_time_steps;
    let stride = options.stride.max(1);
    let checkpoints = [(steps / 2) / stride * stride, steps / stride * stride];
    let mut worst = [0.0f64; 2];
    let channel = ChannelParams {
        alpha: scenario.channel.alpha,
        mu_h: scenario.channel.mu_h,
        sigma_h: scenario.channel.sigma_h,
    };
    for file in &solution.files {
        let grid = &file.grid;
        let q = grid.q;
        let mut problem = FileProblem::build(scenario, file.k, grid.clone(), &solution.stats)?;
        problem.removal = file.removal.clone();
        let rho0 = initial_density(scenario, grid);
        let density = fpk_forward(&file.policy, rho0.view(), &problem)?;

        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(file.k as u64);
        let (mean, std) = (scenario.initial.mean * q, scenario.initial.std * q);
        let h_axis = grid.h.as_ref();
        let stationary_sd = channel.stationary_variance().sqrt();
        let mut s: Vec<f64> = Vec::with_capacity(options.particles);
        let mut h: Vec<f64> = Vec::with_capacity(options.particles);
        for _ in 0..options.particles {
            let x = loop {
                let z: f64 = rng.sample(StandardNormal);
                let x = mean + std * z;
                if std <= 0.0 || (0.0..=q).contains(&x) {
                    break x.clamp(0.0, q);
                }
            };
            s.push(x);
            h.push(match h_axis {
                Some(axis) => {
                    let z: f64 = rng.sample(StandardNormal);
                    reflect(channel.mu_h + stationary_sd * z, axis.lo, axis.hi)
                }
                None => channel.mu_h,
            });
        }

        let dt = grid.dt() * stride as f64;
        let sigma = scenario.storage.sigma_s;
        let mut n = 0;
        let mut next_check = 0;
        loop {
            if n == checkpoints[next_check] {
                let mut hist = grid.zeros_slice();
                let w = 1.0 / options.particles as f64;
                for (x, y) in s.iter().zip(&h) {
                    let i = grid.s.nearest(*x);
                    let j = h_axis.map_or(0, |a| a.nearest(*y));
                    hist[(i, j)] += w / grid.cell_volume(i, j);
                }
                let l1 = l1_distance(grid, hist.view(), density.slice(n))?;
                worst[next_check] = worst[next_check].max(l1);
                next_check += 1;
                if next_check == checkpoints.len() {
                    break;
                }
            }
            let removal = problem.removal[n];
            for (x, y) in s.iter_mut().zip(h.iter_mut()) {
                let hv = h_axis.map(|_| *y);
                let control = file.policy.control_at(grid, n, *x, hv)?;
                let z: f64 = rng.sample(StandardNormal);
                *x = reflect(euler_step(*x, control * q - removal, sigma, dt, z), 0.0, q);
                if let Some(axis) = h_axis {
                    let z: f64 = rng.sample(StandardNormal);
                    *y = reflect(
                        euler_step(*y, channel_drift(*y, &channel), channel.diffusion(), dt, z),
                        axis.lo,
                        axis.hi,
                    );
                }
            }
            n += stride;
        }
    }
    Ok(vec![
        (scenario.time_at(checkpoints[0]), worst[0]),
        (scenario.time_at(checkpoints[1]), worst[1]),
    ])
}

/// Minimize `f` over `[lo, hi]`: coarse scan, then golden-section search
/// around the best scan point.
fn scan_minimize(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    const SCAN: usize = 2000;
    let h = (hi - lo) / SCAN as f64;
    let best = (0..=SCAN)
        .map(|i| lo + h * i as f64)
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .expect("non-empty scan");
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-10 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let mid = 0.5 * (a + b);
    [mid, lo, hi]
        .into_iter()
        .min_by(|x, y| f(*x).total_cmp(&f(*y)))
        .expect("candidates")
}

/// Largest gap between `control(∂ₛv, q, B)` and a brute-force minimizer of
/// the Hamiltonian over `[0, min(1, B/q - ε)]` at `states` random states.
pub fn control_vs_argmin(control: impl Fn(f64, f64, f64) -> f64, states: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = CostParams {
        rho1: 4.0,
        rho2: 0.5,
        nu: 0.1,
        omega: 0.1,
        terminal_c: 0.0,
        terminal_lambda_min: 0.0,
        hinge_penalties: false,
        redundancy_form: RedundancyForm::OwnState,
    };
    let mut worst: f64 = 0.0;
    for _ in 0..states {
        let q = rng.random_range(0.5..2.0);
        let budget = rng.random_range(0.1..2.0);
        let dv = rng.random_range(-50.0..5.0);
        let s = rng.random_range(0.0..q);
        let removal = rng.random_range(0.0..0.5);
        let popularity = rng.random_range(0.05..0.95);
        let cost =
            StepCost::new(params, q, budget, 0.4, s / q, popularity, 0.1).expect("valid cost");
        let cap = control_cap(q, budget);
        let best = scan_minimize(
            |n| hamiltonian(n, s, 0.0, dv, 0.0, removal, &cost, None),
            0.0,
            cap,
        );
        worst = worst.max((control(dv, q, budget) - best).abs());
    }
    worst
}

/// Relative error at `t = 0` between the HJB sweep and exhaustive backward
/// dynamic programming over 8 controls on a 16-node, 16-step instance.
pub fn hjb_vs_dp() -> Result<f64> {
    const NODES: usize = 16;
    const STEPS: usize = 16;
    const CONTROLS: usize = 8;
    let (q, budget, horizon, sigma, removal) = (1.0, 0.4, 1.0, 0.1, 0.1);
    let params = CostParams {
        rho1: 4.0,
        rho2: 0.5,
        nu: 0.0,
        omega: 0.0,
        terminal_c: 0.0,
        terminal_lambda_min: 0.0,
        hinge_penalties: false,
        redundancy_form: RedundancyForm::OwnState,
    };
    let popularity = |n: usize| 0.2 + 0.6 * n as f64 / STEPS as f64;
    let costs: Vec<StepCost> = (0..STEPS)
        .map(|n| StepCost::new(params, q, budget, 0.4, 0.3, popularity(n), 0.0))
        .collect::<Result<_>>()?;
    let grid = Grid::new(q, NODES, None, horizon, STEPS);
    // Steep enough that the optimal control is interior on most of the grid.
    let terminal: Vec<f64> = grid.s.points.iter().map(|s| 6.0 * (1.0 - s)).collect();
    let problem = FileProblem::assemble(
        1,
        grid.clone(),
        sigma,
        None,
        vec![removal; STEPS + 1],
        costs.clone(),
        terminal.clone(),
        ControlRule::FirstOrder,
    );
    let (value, _) = hjb_backward(&problem)?;

    // Markov decision process on the same nodes, written out from scratch.
    let ds = q / (NODES - 1) as f64;
    let dt = horizon / STEPS as f64;
    let diff = 0.5 * sigma * sigma / ds;
    let cap = control_cap(q, budget);
    let mut v = terminal;
    for n in (0..STEPS).rev() {
        let cost = &costs[n];
        let mut next = vec![0.0; NODES];
        for i in 0..NODES {
            let s = i as f64 * ds;
            let width = if i == 0 || i == NODES - 1 {
                0.5 * ds
            } else {
                ds
            };
            let mut best = f64::INFINITY;
            for c in 0..CONTROLS {
                let u = cap * c as f64 / (CONTROLS - 1) as f64;
                let b = u * q - removal;
                let up = if i + 1 < NODES {
                    (b.max(0.0) + diff) / width
                } else {
                    0.0
                };
                let down = if i > 0 {
                    ((-b).max(0.0) + diff) / width
                } else {
                    0.0
                };
                let (pu, pd) = (up * dt, down * dt);
                let mut expect = (1.0 - pu - pd) * v[i];
                if pu > 0.0 {
                    expect += pu * v[i + 1];
                }
                if pd > 0.0 {
                    expect += pd * v[i - 1];
                }
                let running = cost.state_cost(s) + backhaul_cost(u, q, budget);
                best = best.min(dt * running + expect);
            }
            next[i] = best;
        }
        v = next;
    }
    let v0 = value.slice(0);
    Ok((0..NODES)
        .map(|i| (v0[(i, 0)] - v[i]).abs() / v[i].abs())
        .fold(0.0, f64::max))
}

/// Relative errors `(mean, variance)` of a `paths`-path Euler–Maruyama
/// ensemble of the channel after ten relaxation times, against `μ_h` and
/// `σ_h² / (4α)`.
pub fn ou_statistics(channel: ChannelParams, paths: usize, seed: u64) -> (f64, f64) {
    let relax = 2.0 / channel.alpha;
    let horizon = 10.0 * relax;
    let dt = 0.01 * relax;
    let steps = (horizon / dt).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = vec![channel.mu_h; paths];
    for _ in 0..steps {
        for x in h.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x = euler_step(*x, channel_drift(*x, &channel), channel.diffusion(), dt, z);
        }
    }
    let n = paths as f64;
    let mean = h.iter().sum::<f64>() / n;
    let var = h.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let target = channel.stationary_variance();
    (
        (mean - channel.mu_h).abs() / channel.mu_h.abs(),
        (var - target).abs() / target,
    )
}

/// Mean over `seeds` seeds and over files of `L1(M^N_{T/2}, m_{T/2})` for
/// each population size in `sizes`, under the equilibrium policy.
pub fn population_sweep(
    scenario: &Scenario,
    solution: &MfgSolution,
    sizes: &[usize],
    seeds: usize,
    base_seed: u64,
) -> Result<Vec<(usize, f64)>> {
    let policy = FieldPolicy::from_solution(solution);
    let densities = solution.densities();
    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut sc = scenario.clone();
        sc.sim.num_agents = n;
        let options = SimOptions {
            sample_times: vec![0.5 * sc.horizon_hours],
            ..SimOptions::against(&sc, &densities)
        };
        let mut total = 0.0;
        for seed in 0..seeds as u64 {
            let metrics = run_simulation_with(&sc, &policy, base_seed + seed, &options)?.metrics;
            total += metrics.mean_l1_to_meanfield.unwrap_or(f64::NAN);
        }
        out.push((n, total / seeds as f64));
    }
    Ok(out)
}

fn row(check: &str, metric: f64, threshold: f64, pass: bool) -> CheckRow {
    CheckRow {
        check: check.to_string(),
        metric,
        threshold,
        pass,
    }
}

/// Run every suite. Scenario-dependent checks use `scenario`, or
/// [`default_scenario`] when `None`.
pub fn run_all(scenario: Option<&Scenario>, seed: u64) -> Result<Vec<CheckRow>> {
    let builtin;
    let scenario = match scenario {
        Some(s) => s,
        None => {
            builtin = default_scenario();
            &builtin
        }
    };
    let mut rows = Vec::new();
    let solution = solve_mfg(scenario)?;
    rows.push(row(
        "fixed_point_converged",
        *solution.l1_changes.last().unwrap_or(&f64::NAN),
        scenario.solver.tol,
        solution.converged,
    ));
    let mass = mass_error(&solution);
    rows.push(row(
        "mass_conservation",
        mass,
        MASS_THRESHOLD,
        mass <= MASS_THRESHOLD,
    ));

    let particles = fpk_vs_particles(
        scenario,
        &solution,
        ParticleOptions {
            seed,
            ..ParticleOptions::default()
        },
    )?;
    for (t, l1) in particles {
        rows.push(row(
            &format!("fpk_vs_particles_t{t}"),
            l1,
            PARTICLE_L1_THRESHOLD,
            l1 <= PARTICLE_L1_THRESHOLD,
        ));
    }

    let control = control_vs_argmin(optimal_control, 1000, seed);
    rows.push(row(
        "control_vs_argmin",
        control,
        CONTROL_THRESHOLD,
        control <= CONTROL_THRESHOLD,
    ));

    let dp = hjb_vs_dp()?;
    rows.push(row("hjb_vs_dp", dp, DP_THRESHOLD, dp <= DP_THRESHOLD));

    let channel = ChannelParams {
        alpha: 2.0,
        mu_h: 1.0,
        sigma_h: 0.4,
    };
    let (mean_err, var_err) = ou_statistics(channel, 100_000, seed);
    rows.push(row(
        "ou_stationary_mean",
        mean_err,
        OU_MEAN_THRESHOLD,
        mean_err <= OU_MEAN_THRESHOLD,
    ));
    rows.push(row(
        "ou_stationary_variance",
        var_err,
        OU_VARIANCE_THRESHOLD,
        var_err <= OU_VARIANCE_THRESHOLD,
    ));

    let sweep = population_sweep(scenario, &solution, &[10, 100, 1000], 5, seed)?;
    let worst_increase = sweep
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(f64::NEG_INFINITY, f64::max);
    rows.push(row(
        "finite_n_l1_nonincreasing",
        worst_increase,
        0.0,
        worst_increase <= 0.0,
    ));
    Ok(rows)
}
