//! Per-file control problem at one fixed-point iterate: everything the HJB
//! and FPK sweeps need, with the mean field reduced to per-step scalars.
//!
//! Both sweeps share one Markov-chain stencil. At a node with drift `b` and
//! diffusion `D = σ²/2`, the jump rates towards the upper and lower
//! neighbours are
//!
//! ```text
//! up   = (b⁺ + D / ds) / w_i      (0 at the upper boundary)
//! down = (b⁻ + D / ds) / w_i      (0 at the lower boundary)
//! ```
//!
//! where `w_i` is the node's control volume. The HJB sweep applies this
//! generator to `v`; the FPK sweep applies its adjoint in flux form, so mass
//! is conserved exactly and the two discretizations stay dual.

use ndarray::ArrayView2;

use crate::costs::{terminal_cost_unchecked, CostParams, StepCost};
use crate::dynamics::{channel_drift, removal_rate, service_rate, sinr_from_sum, ChannelParams};
use crate::error::{Error, Result};
use crate::scenario::{ControlRule, Scenario};
use crate::solver::control::control_cap;
use crate::solver::grid::{DensityField, Grid};

/// Mean-field quantities extracted from the densities of every file.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldStats {
    /// Expected cached bits `E[s_k]`, indexed `[file][step]`.
    pub expected_bits: Vec<Vec<f64>>,
    /// Expected cached fraction φ_k, indexed `[file][step]`.
    pub phi: Vec<Vec<f64>>,
    /// ζ̄ per step.
    pub zeta_bar: Vec<f64>,
}

/// Mean-field service rate κ(h) = bandwidth · ln(1 + P h² / (N₀ + P E[h²])).
///
/// With N → ∞ the normalized interference `(1/N) Σ_{j≠i} P |h_j|²`
/// converges to `P E[h²]`.
#[derive(Debug, Clone, Copy)]
pub struct MeanFieldRadio {
    pub power: f64,
    pub noise: f64,
    pub bandwidth: f64,
    pub mean_gain: f64,
}

impl MeanFieldRadio {
    pub fn kappa(&self, h: f64) -> f64 {
        let gamma = sinr_from_sum(
            self.power,
            h * h,
            self.power * self.mean_gain,
            1.0,
            self.noise,
        );
        self.bandwidth * service_rate(gamma)
    }
}

fn radio_for(scenario: &Scenario, grid: &Grid, m: ArrayView2<f64>) -> MeanFieldRadio {
    let mu = scenario.channel.mu_h;
    let mean_gain = if grid.h.is_some() {
        grid.expect(m, |_, h| h * h)
    } else {
        mu * mu
    };
    MeanFieldRadio {
        power: scenario.radio.power_w,
        noise: scenario.radio.noise_w,
        bandwidth: scenario.radio.bandwidth,
        mean_gain,
    }
}

/// Mean-field closure for ζ̄ at one step:
/// `Σ_k p_k E_{m_k}[min(κ(h), s_k)]`, the expected number of bits per unit
/// time delivered to users across the catalog.
pub fn zeta_bar_at(
    scenario: &Scenario,
    grids: &[Grid],
    slices: &[ArrayView2<f64>],
    popularity: &[f64],
) -> f64 {
    let mu = scenario.channel.mu_h;
    grids
        .iter()
        .zip(slices)
        .zip(popularity)
        .map(|((grid, m), p)| {
            let radio = radio_for(scenario, grid, *m);
            let rate = if grid.h.is_some() {
                grid.expect(*m, |s, h| radio.kappa(h).min(s))
            } else {
                let kappa = radio.kappa(mu);
                grid.expect(*m, |s, _| kappa.min(s))
            };
            p * rate
        })
        .sum()
}

impl MeanFieldStats {
    pub fn from_densities(
        scenario: &Scenario,
        grids: &[Grid],
        densities: &[DensityField],
    ) -> Result<Self> {
        let steps = grids[0].num_steps;
        let nf = grids.len();
        let mut expected_bits = vec![vec![0.0; steps + 1]; nf];
        let mut phi = vec![vec![0.0; steps + 1]; nf];
        let mut zeta_bar = vec![0.0; steps + 1];
        for n in 0..=steps {
            let t = grids[0].time(n);
            let pop = scenario.popularity_vector(t)?;
            let slices: Vec<_> = densities.iter().map(|d| d.slice(n)).collect();
            for k in 0..nf {
                let e = grids[k].expect(slices[k], |s, _| s);
                expected_bits[k][n] = e;
                phi[k][n] = e / grids[k].q;
            }
            zeta_bar[n] = zeta_bar_at(scenario, grids, &slices, &pop);
        }
        Ok(Self {
            expected_bits,
            phi,
            zeta_bar,
        })
    }

    /// Expected bits of every file except `k` (0-based) at `step`.
    pub fn others_bits(&self, k: usize, step: usize) -> f64 {
        self.expected_bits
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, e)| e[step])
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct FileProblem {
    /// 1-based file index.
    pub k: usize,
    pub grid: Grid,
    pub sigma_s: f64,
    pub channel: Option<ChannelParams>,
    /// Removal rate `β (1 - p_t) ζ̄_t` per step.
    pub removal: Vec<f64>,
    /// Running cost per step (`0..num_steps`).
    pub costs: Vec<StepCost>,
    /// Terminal value per s-node.
    pub terminal: Vec<f64>,
    pub rule: ControlRule,
    inv_w: Vec<f64>,
    d_over_ds: f64,
    h_table: Vec<(f64, f64)>,
}

impl FileProblem {
    /// Set up file `k` (1-based) against the mean-field statistics `stats`.
    pub fn build(
        scenario: &Scenario,
        k: usize,
        grid: Grid,
        stats: &MeanFieldStats,
    ) -> Result<Self> {
        let idx = k - 1;
        let params = CostParams::from(&scenario.cost);
        let q = grid.q;
        let o = scenario.storage.capacity;
        let steps = grid.num_steps;
        let mut removal = Vec::with_capacity(steps + 1);
        let mut costs = Vec::with_capacity(steps);
        for n in 0..=steps {
            let t = grid.time(n);
            let p = scenario.popularity_at(t, k)?;
            removal.push(removal_rate(
                scenario.storage.removal_beta,
                p,
                stats.zeta_bar[n],
            ));
            if n < steps {
                let budget = scenario.budget_at(t, k)?;
                if !(budget > 0.0) {
                    return Err(Error::Domain(format!(
                        "backhaul budget for file {k} is zero at t = {t}; the backhaul cost is infinite"
                    )));
                }
                costs.push(StepCost::new(
                    params,
                    q,
                    budget,
                    o,
                    stats.phi[idx][n],
                    p,
                    stats.others_bits(idx, n),
                )?);
            }
        }
        let others_t = stats.others_bits(idx, steps);
        let terminal = grid
            .s
            .points
            .iter()
            .map(|s| terminal_cost_unchecked(1.0 - (s + others_t) / o, &params))
            .collect();
        let channel = (!scenario.channel.static_channel).then_some(ChannelParams {
            alpha: scenario.channel.alpha,
            mu_h: scenario.channel.mu_h,
            sigma_h: scenario.channel.sigma_h,
        });
        Ok(Self::assemble(
            k,
            grid,
            scenario.storage.sigma_s,
            channel,
            removal,
            costs,
            terminal,
            scenario.solver.control_rule,
        ))
    }

    /// Put a problem together from its parts.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        k: usize,
        grid: Grid,
        sigma_s: f64,
        channel: Option<ChannelParams>,
        removal: Vec<f64>,
        costs: Vec<StepCost>,
        terminal: Vec<f64>,
        rule: ControlRule,
    ) -> Self {
        let inv_w = grid.s.weights.iter().map(|w| 1.0 / w).collect();
        let d_over_ds = 0.5 * sigma_s * sigma_s / grid.s.step;
        let h_table = match (&grid.h, &channel) {
            (Some(axis), Some(ch)) => {
                let d = 0.5 * ch.diffusion() * ch.diffusion();
                (0..axis.len())
                    .map(|j| {
                        let b = channel_drift(axis.points[j], ch);
                        axis_rates(j, axis.len(), axis.step, axis.weights[j], b, d)
                    })
                    .collect()
            }
            _ => vec![(0.0, 0.0); grid.nh()],
        };
        Self {
            k,
            grid,
            sigma_s,
            channel,
            removal,
            costs,
            terminal,
            rule,
            inv_w,
            d_over_ds,
            h_table,
        }
    }

    pub fn ds(&self) -> f64 {
        self.grid.s.step
    }

    pub fn diffusion_s(&self) -> f64 {
        0.5 * self.sigma_s * self.sigma_s
    }

    /// Jump rates along s at node `i` for drift `b`.
    #[inline]
    pub fn s_rates(&self, i: usize, b: f64) -> (f64, f64) {
        let up = if i + 1 < self.inv_w.len() {
            (b.max(0.0) + self.d_over_ds) * self.inv_w[i]
        } else {
            0.0
        };
        let down = if i > 0 {
            ((-b).max(0.0) + self.d_over_ds) * self.inv_w[i]
        } else {
            0.0
        };
        (up, down)
    }

    /// Jump rates along h at node `j` (zero in static mode).
    #[inline]
    pub fn h_rates(&self, j: usize) -> (f64, f64) {
        self.h_table[j]
    }

    /// Largest total jump rate over all nodes for the drift bound `max_abs_drift`.
    fn max_rate(&self, max_abs_drift: f64) -> f64 {
        let ds = self.ds();
        let s_rate = 2.0 * (max_abs_drift / ds + self.diffusion_s() / (ds * ds));
        let h_rate = (0..self.grid.nh())
            .map(|j| {
                let (u, d) = self.h_rates(j);
                u + d
            })
            .fold(0.0, f64::max);
        s_rate + h_rate
    }

    /// Check the explicit-scheme condition `dt · max rate ≤ 1` for drifts
    /// bounded by `max_abs_drift`.
    pub fn check_cfl(&self, max_abs_drift: f64, context: &str) -> Result<()> {
        check_cfl(&self.grid, self.max_rate(max_abs_drift), context)
    }

    /// Drift bound covering every admissible control.
    pub fn drift_bound(&self) -> f64 {
        let cap = self
            .costs
            .iter()
            .map(|c| control_cap(c.q, c.budget) * c.q)
            .fold(0.0, f64::max);
        let removal = self.removal.iter().cloned().fold(0.0, f64::max);
        cap.max(removal)
    }
}

pub(crate) fn check_cfl(grid: &Grid, max_rate: f64, context: &str) -> Result<()> {
    let dt = grid.dt();
    let cfl = dt * max_rate;
    if cfl > 1.0 + 1e-12 {
        return Err(Error::Cfl {
            context: context.to_string(),
            cfl,
            required_steps: (grid.horizon * max_rate).ceil() as usize,
        });
    }
    Ok(())
}

#[inline]
fn axis_rates(i: usize, n: usize, step: f64, weight: f64, b: f64, d: f64) -> (f64, f64) {
    let diff = d / step;
    let up = if i + 1 < n {
        (b.max(0.0) + diff) / weight
    } else {
        0.0
    };
    let down = if i > 0 {
        ((-b).max(0.0) + diff) / weight
    } else {
        0.0
    };
    (up, down)
}

/// Upfront CFL check for a whole scenario using worst-case drift bounds.
pub fn check_scenario_cfl(scenario: &Scenario, grids: &[Grid]) -> Result<()> {
    let beta = scenario.storage.removal_beta;
    let kappa_max = {
        let mu = scenario.channel.mu_h;
        let h_max = if scenario.channel.static_channel {
            mu
        } else {
            let (lo, hi) = scenario.h_range();
            lo.abs().max(hi.abs())
        };
        // Interference from a population concentrated at the smallest gain is
        // bounded below by zero.
        scenario.radio.bandwidth
            * service_rate(scenario.radio.power_w * h_max * h_max / scenario.radio.noise_w)
    };
    let zeta_max = grids.iter().map(|g| kappa_max.min(g.q)).fold(0.0, f64::max);
    for (idx, grid) in grids.iter().enumerate() {
        let k = idx + 1;
        let mut bound: f64 = 0.0;
        for n in 0..=grid.num_steps {
            let t = grid.time(n);
            let p = scenario.popularity_at(t, k)?;
            let budget = scenario.budget_at(t, k)?;
            bound = bound
                .max(control_cap(grid.q, budget) * grid.q)
                .max(removal_rate(beta, p, zeta_max));
        }
        let ds = grid.s.step;
        let d = 0.5 * scenario.storage.sigma_s * scenario.storage.sigma_s;
        let mut rate = 2.0 * (bound / ds + d / (ds * ds));
        if let Some(axis) = &grid.h {
            let ch = ChannelParams {
                alpha: scenario.channel.alpha,
                mu_h: scenario.channel.mu_h,
                sigma_h: scenario.channel.sigma_h,
            };
            let dh = 0.5 * ch.diffusion() * ch.diffusion();
            let bh = channel_drift(axis.lo, &ch)
                .abs()
                .max(channel_drift(axis.hi, &ch).abs());
            rate += 2.0 * (bh / axis.step + dh / (axis.step * axis.step));
        }
        check_cfl(grid, rate, &format!("file {k}"))?;
    }
    Ok(())
}
