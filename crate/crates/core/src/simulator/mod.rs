//! Finite-N agent simulation of the caching network.
//!
//! SBSs sit on a square lattice wrapped into a torus. Users arrive as a
//! Poisson stream, pick a file from the current popularity vector and are
//! served by every idle SBS within the coverage radius; whatever the caches
//! cannot supply is fetched over the backhaul. Each SBS steps its channel and
//! per-file storage with Euler–Maruyama under a [`Policy`].

mod agents;
mod baseline;
mod engine;
mod measure;

pub use agents::{place_sbs, torus_distance, AgentState, RequestEvent, Serving};
pub use baseline::BaselinePolicy;
pub use engine::{
    run_simulation, run_simulation_with, Metrics, RequestRecord, SimOptions, SimOutput,
    TrajectoryRow,
};
pub use measure::empirical_measure;

use crate::error::{Error, Result};
use crate::solver::{Grid, MfgSolution, PolicyField};

/// Feedback cache-download control of a single SBS.
pub trait Policy: Sync {
    fn name(&self) -> &str;

    /// Control for the 1-based file `k` at solver step `step`, given the
    /// SBS's own cached bits `s` and channel `h` (`None` for a static channel).
    fn control(&self, k: usize, step: usize, s: f64, h: Option<f64>) -> Result<f64>;
}

/// Policy read off per-file policy fields by interpolation.
#[derive(Debug, Clone)]
pub struct FieldPolicy {
    name: String,
    grids: Vec<Grid>,
    fields: Vec<PolicyField>,
}

impl FieldPolicy {
    pub fn new(
        name: impl Into<String>,
        grids: Vec<Grid>,
        fields: Vec<PolicyField>,
    ) -> Result<Self> {
        if grids.len() != fields.len() {
            return Err(Error::GridMismatch(format!(
                "{} grids for {} policy fields",
                grids.len(),
                fields.len()
            )));
        }
        for (g, f) in grids.iter().zip(&fields) {
            if f.0.data.shape() != [g.num_steps + 1, g.ns(), g.nh()] {
                return Err(Error::GridMismatch(format!(
                    "policy field shape {:?} does not match its grid",
                    f.0.data.shape()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            grids,
            fields,
        })
    }

    /// The equilibrium policy of a solved game.
    pub fn from_solution(solution: &MfgSolution) -> Self {
        Self {
            name: "mfg".to_string(),
            grids: solution.files.iter().map(|f| f.grid.clone()).collect(),
            fields: solution.files.iter().map(|f| f.policy.clone()).collect(),
        }
    }

    pub fn field(&self, k: usize) -> Option<&PolicyField> {
        self.fields.get(k.wrapping_sub(1))
    }
}

impl Policy for FieldPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn control(&self, k: usize, step: usize, s: f64, h: Option<f64>) -> Result<f64> {
        let idx = k.wrapping_sub(1);
        let (grid, field) = self
            .grids
            .get(idx)
            .zip(self.fields.get(idx))
            .ok_or_else(|| Error::Domain(format!("policy has no file {k}")))?;
        field.control_at(grid, step, s, h)
    }
}

/// The same control everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub f64);

impl Policy for ConstantPolicy {
    fn name(&self) -> &str {
        "constant"
    }

    fn control(&self, _k: usize, _step: usize, _s: f64, _h: Option<f64>) -> Result<f64> {
        Ok(self.0)
    }
}
