use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::dynamics::{
    channel_drift, euler_step, removal_rate, service_rate, sinr_from_sum, ChannelParams,
};
use crate::error::{Error, Result};
use crate::scenario::{Scenario, ZetaClosure};
use crate::simulator::agents::{
    lattice_side, place_sbs, torus_distance, AgentState, RequestEvent, Serving,
};
use crate::simulator::measure::empirical_measure;
use crate::simulator::Policy;
use crate::solver::{l1_distance, DensityField, Grid};

/// Relative slack when deciding that a request or a cache is exhausted.
const BITS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Default)]
pub struct SimOptions<'a> {
    /// Mean-field density flows (one per file) for the L1 samples.
    pub reference: Option<&'a [DensityField]>,
    /// Times (hours) at which `L1(M^N_t, m_t)` is sampled.
    pub sample_times: Vec<f64>,
    /// Record every agent's state every this many simulation steps (0: never).
    pub trajectory_every: usize,
    /// Start every cache at this fraction of the file instead of sampling ρ₀.
    pub initial_fraction: Option<f64>,
}

impl<'a> SimOptions<'a> {
    /// Sample the distance to `reference` at `T/2` and `T`.
    pub fn against(scenario: &Scenario, reference: &'a [DensityField]) -> Self {
        Self {
            reference: Some(reference),
            sample_times: vec![0.5 * scenario.horizon_hours, scenario.horizon_hours],
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestRecord {
    pub id: usize,
    pub time: f64,
    pub file: usize,
    pub size: f64,
    pub cache_bits: f64,
    pub backhaul_bits: f64,
    /// Number of SBSs that served it.
    pub servers: usize,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Fraction of requested bits delivered from SBS caches.
    pub served_fraction: f64,
    pub requested_bits: f64,
    pub cache_bits: f64,
    pub backhaul_bits: f64,
    pub num_requests: usize,
    pub uncovered_requests: usize,
    /// Mean cached fraction `s_k / q_k` over agents, per hour bin and file.
    pub occupancy: Vec<Vec<f64>>,
    /// `(t, L1 per file)` at the sample times.
    pub l1_samples: Vec<(f64, Vec<f64>)>,
    /// Mean of all L1 samples, when a reference was given.
    pub mean_l1_to_meanfield: Option<f64>,
    pub requests: Vec<RequestRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub agent: usize,
    pub file: usize,
    pub s: f64,
    pub h: f64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub metrics: Metrics,
    pub trajectories: Vec<TrajectoryRow>,
    pub agents: Vec<AgentState>,
}

struct Active {
    event: RequestEvent,
    servers: Vec<usize>,
    received: f64,
}

pub fn run_simulation(scenario: &Scenario, policy: &dyn Policy, seed: u64) -> Result<Metrics> {
    Ok(run_simulation_with(scenario, policy, seed, &SimOptions::default())?.metrics)
}

fn agent_rng(seed: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64 + 1);
    rng
}

fn sample_initial(scenario: &Scenario, q: f64, rng: &mut ChaCha8Rng) -> f64 {
    let mean = scenario.initial.mean * q;
    let std = scenario.initial.std * q;
    if std <= 0.0 {
        return mean.clamp(0.0, q);
    }
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let x = mean + std * z;
        if (0.0..=q).contains(&x) {
            return x;
        }
    }
}

/// Run one finite-N simulation.
///
/// Randomness comes from one ChaCha8 stream for requests and one per agent,
/// all derived from `seed`, so results do not depend on scheduling.
pub fn run_simulation_with(
    scenario: &Scenario,
    policy: &dyn Policy,
    seed: u64,
    options: &SimOptions,
) -> Result<SimOutput> {
    let sim = &scenario.sim;
    let nf = scenario.num_files();
    let n_agents = sim.num_agents;
    let stride = sim.time_stride;
    let solver_steps = scenario.grid.num_time_steps;
    if !solver_steps.is_multiple_of(stride) {
        return Err(Error::invalid(
            "sim.time_stride",
            format!("must divide grid.num_time_steps = {solver_steps}"),
        ));
    }
    let steps = solver_steps / stride;
    let dt = scenario.horizon_hours / steps as f64;
    let sizes: Vec<f64> = scenario.files.iter().map(|f| f.size_bits).collect();
    let dynamic = !scenario.channel.static_channel;
    let channel = ChannelParams {
        alpha: scenario.channel.alpha,
        mu_h: scenario.channel.mu_h,
        sigma_h: scenario.channel.sigma_h,
    };
    let radio = &scenario.radio;
    let beta = scenario.storage.removal_beta;
    let sigma_s = scenario.storage.sigma_s;

    let grids = match options.reference {
        Some(reference) => {
            if reference.len() != nf {
                return Err(Error::GridMismatch(format!(
                    "reference has {} files, scenario {nf}",
                    reference.len()
                )));
            }
            (1..=nf)
                .map(|k| Grid::for_file(scenario, k))
                .collect::<Result<Vec<_>>>()?
        }
        None => Vec::new(),
    };
    let sample_steps: Vec<usize> = options
        .sample_times
        .iter()
        .map(|t| ((t / dt).round() as usize).min(steps))
        .collect();

    let spacing = sim.spacing_units;
    let torus = lattice_side(n_agents) as f64 * spacing;
    let positions = place_sbs(n_agents, spacing);
    let mut rngs: Vec<ChaCha8Rng> = (0..n_agents).map(|i| agent_rng(seed, i)).collect();
    let mut request_rng = ChaCha8Rng::seed_from_u64(seed);
    request_rng.set_stream(0);

    let stationary_sd = channel.stationary_variance().sqrt();
    let mut agents: Vec<AgentState> = positions
        .into_iter()
        .enumerate()
        .map(|(id, position)| {
            let rng = &mut rngs[id];
            let cache_s = sizes
                .iter()
                .map(|&q| match options.initial_fraction {
                    Some(f) => (f * q).clamp(0.0, q),
                    None => sample_initial(scenario, q, rng),
                })
                .collect();
            let channel_h = if dynamic {
                let z: f64 = rng.sample(StandardNormal);
                channel.mu_h + stationary_sd * z
            } else {
                channel.mu_h
            };
            AgentState {
                id,
                position,
                channel_h,
                cache_s,
                serving: None,
            }
        })
        .collect();

    let arrivals = {
        let mean = sim.request_rate * n_agents as f64 * dt;
        if mean > 0.0 {
            Some(Poisson::new(mean).map_err(|e| Error::Domain(format!("request rate: {e}")))?)
        } else {
            None
        }
    };

    let bins = scenario.horizon_hours.ceil().max(1.0) as usize;
    let mut occupancy = vec![vec![0.0; nf]; bins];
    let mut occupancy_count = vec![0usize; bins];
    let mut l1_samples = Vec::new();
    let mut trajectories = Vec::new();
    let mut records: Vec<RequestRecord> = Vec::new();
    let mut pending: VecDeque<(RequestEvent, Vec<usize>)> = VecDeque::new();
    let mut active: Vec<Active> = Vec::new();
    let mut next_id = 0usize;
    let mut kappa = vec![0.0; n_agents];
    let mut delivered_now = vec![0.0; n_agents];
    let window = ((1.0 / dt).round() as usize).max(1);
    let mut delivered_history: VecDeque<f64> = VecDeque::with_capacity(window);

    for n in 0..=steps {
        let t = n as f64 * dt;

        for (idx, _) in sample_steps.iter().enumerate().filter(|(_, s)| **s == n) {
            if let Some(reference) = options.reference {
                let mut per_file = Vec::with_capacity(nf);
                for k in 1..=nf {
                    let emp = empirical_measure(&agents, k, &grids[k - 1])?;
                    per_file.push(l1_distance(
                        &grids[k - 1],
                        emp.view(),
                        reference[k - 1].slice(n * stride),
                    )?);
                }
                l1_samples.push((options.sample_times[idx], per_file));
            }
        }
        if options.trajectory_every > 0 && n % options.trajectory_every == 0 {
            for a in &agents {
                for k in 0..nf {
                    trajectories.push(TrajectoryRow {
                        t,
                        agent: a.id,
                        file: k + 1,
                        s: a.cache_s[k],
                        h: a.channel_h,
                    });
                }
            }
        }
        let bin = ((t.floor()) as usize).min(bins - 1);
        for k in 0..nf {
            let mean = agents.iter().map(|a| a.cache_s[k]).sum::<f64>() / n_agents as f64;
            occupancy[bin][k] += mean / sizes[k];
        }
        occupancy_count[bin] += 1;
        if n == steps {
            break;
        }

        let popularity = scenario.popularity_vector(t)?;

        // Arrivals.
        let count = arrivals
            .as_ref()
            .map_or(0, |d| d.sample(&mut request_rng) as usize);
        for _ in 0..count {
            let u: f64 = request_rng.random();
            let file = pick(&popularity, u) + 1;
            let position = (
                request_rng.random::<f64>() * torus,
                request_rng.random::<f64>() * torus,
            );
            let covering: Vec<usize> = agents
                .iter()
                .filter(|a| torus_distance(a.position, position, torus) <= sim.coverage_radius)
                .map(|a| a.id)
                .collect();
            let event = RequestEvent {
                id: next_id,
                time: t,
                position,
                file,
            };
            next_id += 1;
            if covering.is_empty() {
                let q = sizes[file - 1];
                records.push(RequestRecord {
                    id: event.id,
                    time: t,
                    file,
                    size: q,
                    cache_bits: 0.0,
                    backhaul_bits: q,
                    servers: 0,
                    covered: false,
                });
            } else {
                pending.push_back((event, covering));
            }
        }

        // Matching, first come first served, in agent-id order.
        let mut still_waiting = VecDeque::new();
        while let Some((event, covering)) = pending.pop_front() {
            let idle: Vec<usize> = covering
                .iter()
                .copied()
                .filter(|&i| agents[i].serving.is_none())
                .collect();
            if idle.is_empty() {
                still_waiting.push_back((event, covering));
                continue;
            }
            for &i in &idle {
                agents[i].serving = Some(Serving {
                    request: event.id,
                    file: event.file,
                    delivered: 0.0,
                    start: t,
                });
            }
            active.push(Active {
                event,
                servers: idle,
                received: 0.0,
            });
        }
        pending = still_waiting;

        // Radio.
        let gain_sum: f64 = agents.iter().map(|a| a.channel_h * a.channel_h).sum();
        for (i, a) in agents.iter().enumerate() {
            let own = a.channel_h * a.channel_h;
            let gamma = sinr_from_sum(
                radio.power_w,
                own,
                radio.power_w * (gain_sum - own),
                n_agents as f64,
                radio.noise_w,
            );
            kappa[i] = radio.bandwidth * service_rate(gamma);
        }

        // Service.
        delivered_now.iter_mut().for_each(|x| *x = 0.0);
        let mut finished = Vec::new();
        for (r, req) in active.iter_mut().enumerate() {
            let k = req.event.file - 1;
            let q = sizes[k];
            let mut sum = 0.0;
            let mut exhausted = true;
            for &i in &req.servers {
                let a = &mut agents[i];
                let serving = a.serving.as_mut().expect("server is serving");
                let avail = (a.cache_s[k] - serving.delivered).max(0.0);
                let d = (kappa[i] * dt).min(avail);
                serving.delivered += d;
                delivered_now[i] += d;
                sum += d;
                if avail - d > BITS_EPS * q {
                    exhausted = false;
                }
            }
            req.received = (req.received + sum).min(q);
            if req.received >= q * (1.0 - BITS_EPS) || exhausted {
                finished.push(r);
            }
        }
        for r in finished.into_iter().rev() {
            let req = active.swap_remove(r);
            records.push(close(&req, &sizes, &mut agents));
        }
        // Keep service order stable across steps.
        active.sort_by_key(|a| a.event.id);

        // Removal rate.
        let zeta = match sim.zeta_closure {
            ZetaClosure::MeanField => (0..nf)
                .map(|k| {
                    let mean = agents
                        .iter()
                        .zip(&kappa)
                        .map(|(a, kp)| kp.min(a.cache_s[k]))
                        .sum::<f64>()
                        / n_agents as f64;
                    popularity[k] * mean
                })
                .sum(),
            ZetaClosure::Measured => {
                if delivered_history.len() == window {
                    delivered_history.pop_front();
                }
                delivered_history
                    .push_back(delivered_now.iter().sum::<f64>() / (n_agents as f64 * dt));
                delivered_history.iter().sum::<f64>() / delivered_history.len() as f64
            }
        };

        // Storage and channel.
        let step = n * stride;
        for (a, rng) in agents.iter_mut().zip(rngs.iter_mut()) {
            let h = dynamic.then_some(a.channel_h);
            for k in 0..nf {
                let q = sizes[k];
                let s = a.cache_s[k];
                let control = policy.control(k + 1, step, s, h)?;
                let drift = control * q - removal_rate(beta, popularity[k], zeta);
                let z: f64 = rng.sample(StandardNormal);
                a.cache_s[k] = euler_step(s, drift, sigma_s, dt, z).clamp(0.0, q);
            }
            if dynamic {
                let z: f64 = rng.sample(StandardNormal);
                a.channel_h = euler_step(
                    a.channel_h,
                    channel_drift(a.channel_h, &channel),
                    channel.diffusion(),
                    dt,
                    z,
                );
            }
        }
    }

    // Requests still open at the horizon fall back to the backhaul.
    for req in std::mem::take(&mut active) {
        records.push(close(&req, &sizes, &mut agents));
    }
    for (event, _) in pending {
        let q = sizes[event.file - 1];
        records.push(RequestRecord {
            id: event.id,
            time: event.time,
            file: event.file,
            size: q,
            cache_bits: 0.0,
            backhaul_bits: q,
            servers: 0,
            covered: true,
        });
    }
    records.sort_by_key(|r| r.id);

    for (row, count) in occupancy.iter_mut().zip(&occupancy_count) {
        if *count > 0 {
            row.iter_mut().for_each(|x| *x /= *count as f64);
        }
    }
    let requested_bits: f64 = records.iter().map(|r| r.size).sum();
    let cache_bits: f64 = records.iter().map(|r| r.cache_bits).sum();
    let backhaul_bits: f64 = records.iter().map(|r| r.backhaul_bits).sum();
    let all_l1: Vec<f64> = l1_samples
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .collect();
    let metrics = Metrics {
        served_fraction: if requested_bits > 0.0 {
            (cache_bits / requested_bits).clamp(0.0, 1.0)
        } else {
            0.0
        },
        requested_bits,
        cache_bits,
        backhaul_bits,
        num_requests: records.len(),
        uncovered_requests: records.iter().filter(|r| !r.covered).count(),
        occupancy,
        l1_samples,
        mean_l1_to_meanfield: (!all_l1.is_empty())
            .then(|| all_l1.iter().sum::<f64>() / all_l1.len() as f64),
        requests: records,
    };
    Ok(SimOutput {
        metrics,
        trajectories,
        agents,
    })
}

fn close(req: &Active, sizes: &[f64], agents: &mut [AgentState]) -> RequestRecord {
    for &i in &req.servers {
        agents[i].serving = None;
    }
    let q = sizes[req.event.file - 1];
    let cache_bits = req.received.min(q);
    RequestRecord {
        id: req.event.id,
        time: req.event.time,
        file: req.event.file,
        size: q,
        cache_bits,
        backhaul_bits: q - cache_bits,
        servers: req.servers.len(),
        covered: true,
    }
}

/// Index drawn from the probability vector `p` with the uniform variate `u`.
fn pick(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}
