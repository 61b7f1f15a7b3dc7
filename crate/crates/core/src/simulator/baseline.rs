use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scenario::{Keyframe, PopularityKind, Scenario};
use crate::simulator::{FieldPolicy, Policy};
use crate::solver::problem::zeta_bar_at;
use crate::solver::{
    hjb_backward, initial_density, DensityField, FileProblem, Grid, MeanFieldStats,
};

/// Baseline from past experience: every SBS plays the optimal response to
/// the storage density and popularity averaged over the previous window,
/// frozen over the whole horizon, instead of tracking the mean field.
#[derive(Debug, Clone)]
pub struct BaselinePolicy {
    inner: FieldPolicy,
    /// Time-averaged density m̄ per file.
    pub mean_density: Vec<Array2<f64>>,
    /// Time-averaged popularity p̄.
    pub mean_popularity: Vec<f64>,
}

/// Average of `items` computed as `first + mean(x - first)`, so a constant
/// sequence averages to itself exactly.
fn exact_mean<'a>(mut items: impl Iterator<Item = Array2<f64>> + 'a) -> Option<Array2<f64>> {
    let first = items.next()?;
    let mut acc = Array2::<f64>::zeros(first.raw_dim());
    let mut count = 1.0;
    for x in items {
        acc += &(&x - &first);
        count += 1.0;
    }
    Some(&first + &(acc / count))
}

impl BaselinePolicy {
    /// Build the baseline from the density flows of the previous period.
    ///
    /// The period is taken to repeat with the horizon, so the window of
    /// `sim.baseline_window_hours` preceding `t = 0` is the tail of
    /// `history`. Without history (or with a zero window) m̄ is ρ₀.
    pub fn from_history(scenario: &Scenario, history: Option<&[DensityField]>) -> Result<Self> {
        let nf = scenario.num_files();
        let grids = (1..=nf)
            .map(|k| Grid::for_file(scenario, k))
            .collect::<Result<Vec<_>>>()?;
        let steps = grids[0].num_steps;
        let dt = grids[0].dt();
        let window_hours = scenario
            .sim
            .baseline_window_hours
            .min(scenario.horizon_hours);
        let window_steps = ((window_hours / dt).round() as usize).min(steps);
        let first = steps - window_steps;

        let vector = |n: usize| -> Result<Array2<f64>> {
            let p = scenario.popularity_vector(grids[0].time(n))?;
            Ok(Array2::from_shape_vec((1, nf), p).expect("popularity shape"))
        };
        let mean_popularity = if window_steps == 0 {
            vector(0)?
        } else {
            exact_mean((first..=steps).map(|n| vector(n).expect("time inside horizon")))
                .expect("non-empty window")
        };
        let mean_popularity: Vec<f64> = mean_popularity.iter().copied().collect();

        let mean_density: Vec<Array2<f64>> = match history {
            Some(flows) if window_steps > 0 => {
                if flows.len() != nf {
                    return Err(Error::GridMismatch(format!(
                        "history has {} files, scenario {nf}",
                        flows.len()
                    )));
                }
                flows
                    .iter()
                    .zip(&grids)
                    .map(|(flow, grid)| {
                        if flow.0.data.shape() != [steps + 1, grid.ns(), grid.nh()] {
                            return Err(Error::GridMismatch(format!(
                                "history shape {:?} does not match the scenario grid",
                                flow.0.data.shape()
                            )));
                        }
                        Ok(
                            exact_mean((first..=steps).map(|n| flow.slice(n).to_owned()))
                                .expect("non-empty window"),
                        )
                    })
                    .collect::<Result<_>>()?
            }
            _ => grids.iter().map(|g| initial_density(scenario, g)).collect(),
        };

        let frozen = freeze_popularity(scenario, &mean_popularity);
        let views: Vec<_> = mean_density.iter().map(|m| m.view()).collect();
        let zeta = zeta_bar_at(&frozen, &grids, &views, &mean_popularity);
        let mut expected_bits = Vec::with_capacity(nf);
        let mut phi = Vec::with_capacity(nf);
        for (m, grid) in mean_density.iter().zip(&grids) {
            let e = grid.expect(m.view(), |s, _| s);
            expected_bits.push(vec![e; steps + 1]);
            phi.push(vec![e / grid.q; steps + 1]);
        }
        let stats = MeanFieldStats {
            expected_bits,
            phi,
            zeta_bar: vec![zeta; steps + 1],
        };

        let mut fields = Vec::with_capacity(nf);
        for (idx, grid) in grids.iter().enumerate() {
            let problem = FileProblem::build(&frozen, idx + 1, grid.clone(), &stats)?;
            let (_, policy) = hjb_backward(&problem)?;
            fields.push(policy);
        }
        Ok(Self {
            inner: FieldPolicy::new("baseline", grids, fields)?,
            mean_density,
            mean_popularity,
        })
    }

    pub fn fields(&self) -> &FieldPolicy {
        &self.inner
    }
}

/// The scenario with popularity held at `p̄` (unchanged if already static).
fn freeze_popularity(scenario: &Scenario, mean: &[f64]) -> Scenario {
    let mut frozen = scenario.clone();
    if scenario.popularity.kind != PopularityKind::StaticZipf {
        frozen.popularity.kind = PopularityKind::PiecewiseLinear;
        frozen.popularity.keyframes = vec![Keyframe {
            time_hours: 0.0,
            weights: mean.to_vec(),
        }];
    }
    frozen
}

impl Policy for BaselinePolicy {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn control(&self, k: usize, step: usize, s: f64, h: Option<f64>) -> Result<f64> {
        self.inner.control(k, step, s, h)
    }
}
