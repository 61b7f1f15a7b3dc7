//! Cost components of the caching game.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::scenario::{CostConfig, RedundancyForm, Scenario};
use crate::solver::grid::Grid;

/// Tolerance on the unit mass of a density passed to [`expected_cached_fraction`].
pub const MASS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    pub rho1: f64,
    pub rho2: f64,
    pub nu: f64,
    pub omega: f64,
    pub terminal_c: f64,
    pub terminal_lambda_min: f64,
    pub hinge_penalties: bool,
    pub redundancy_form: RedundancyForm,
}

impl From<&CostConfig> for CostParams {
    fn from(c: &CostConfig) -> Self {
        Self {
            rho1: c.rho1,
            rho2: c.rho2,
            nu: c.nu,
            omega: c.omega,
            terminal_c: c.terminal_c,
            terminal_lambda_min: c.terminal_lambda_min,
            hinge_penalties: c.hinge_penalties,
            redundancy_form: c.redundancy_form,
        }
    }
}

/// Backhaul cost `-ln(B - q n)`, or `+∞` once `n ≥ B / q`.
#[inline]
pub fn backhaul_cost(n: f64, q: f64, budget: f64) -> f64 {
    if n < budget / q {
        -(budget - q * n).ln()
    } else {
        f64::INFINITY
    }
}

/// Expected cached fraction `φ = (1/q) ∫ s m ds` (marginalized over h).
pub fn expected_cached_fraction(m: ArrayView2<f64>, grid: &Grid) -> Result<f64> {
    let mass = grid.mass(m);
    if (mass - 1.0).abs() > MASS_TOL {
        return Err(Error::Domain(format!(
            "density mass {mass} deviates from 1 by more than {MASS_TOL}"
        )));
    }
    Ok(grid.expect(m, |s, _| s) / grid.q)
}

/// Mean-field redundancy cost `exp(-ϱ₁ φ) + ϱ₂ φ / Ω`.
pub fn meanfield_redundancy_cost(phi: f64, popularity: f64, params: &CostParams) -> Result<f64> {
    if !(popularity > 0.0) {
        return Err(Error::Domain(format!(
            "popularity {popularity} must be > 0"
        )));
    }
    Ok((-params.rho1 * phi).exp() + params.rho2 * phi / popularity)
}

/// Derivative of [`meanfield_redundancy_cost`] with respect to φ.
pub fn redundancy_slope(phi: f64, popularity: f64, params: &CostParams) -> Result<f64> {
    if !(popularity > 0.0) {
        return Err(Error::Domain(format!(
            "popularity {popularity} must be > 0"
        )));
    }
    Ok(-params.rho1 * (-params.rho1 * phi).exp() + params.rho2 / popularity)
}

/// Minimizer `(1/ϱ₁) ln(ϱ₁ Ω / ϱ₂)` of the redundancy cost, when interior.
pub fn redundancy_minimizer(popularity: f64, params: &CostParams) -> Option<f64> {
    let arg = params.rho1 * popularity / params.rho2;
    (arg > 1.0).then(|| arg.ln() / params.rho1)
}

/// Terminal cost `c_T · max(0, λ_min - λ_T)²` on the free-storage fraction.
pub fn terminal_cost(lambda_t: f64, params: &CostParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda_t) {
        return Err(Error::Domain(format!(
            "free-storage fraction {lambda_t} outside [0, 1]"
        )));
    }
    Ok(terminal_cost_unchecked(lambda_t, params))
}

/// The same quadratic hinge, continued past the `[0, 1]` range. Used for the
/// terminal value when the cached total exceeds the capacity.
#[inline]
pub fn terminal_cost_unchecked(lambda_t: f64, params: &CostParams) -> f64 {
    let gap = (params.terminal_lambda_min - lambda_t).max(0.0);
    params.terminal_c * gap * gap
}

/// Running cost J_{k,t} at one time slice, with everything that depends on
/// the mean field already reduced to scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCost {
    pub params: CostParams,
    pub q: f64,
    pub budget: f64,
    pub capacity: f64,
    /// φ_k from the current mean field.
    pub phi: f64,
    /// Ω_t: popularity of the file at this time.
    pub popularity: f64,
    /// Expected cached bits of all other files (previous iterate).
    pub others_bits: f64,
    redundancy: f64,
    slope: f64,
}

impl StepCost {
    pub fn new(
        params: CostParams,
        q: f64,
        budget: f64,
        capacity: f64,
        phi: f64,
        popularity: f64,
        others_bits: f64,
    ) -> Result<Self> {
        Ok(Self {
            redundancy: meanfield_redundancy_cost(phi, popularity, &params)?,
            slope: redundancy_slope(phi, popularity, &params)?,
            params,
            q,
            budget,
            capacity,
            phi,
            popularity,
            others_bits,
        })
    }

    /// Build the step cost for file `k` at time `t` from the density slice.
    pub fn from_density(
        scenario: &Scenario,
        k: usize,
        t: f64,
        m: ArrayView2<f64>,
        grid: &Grid,
        others_bits: f64,
    ) -> Result<Self> {
        Self::new(
            CostParams::from(&scenario.cost),
            scenario.file(k)?.size_bits,
            scenario.budget_at(t, k)?,
            scenario.storage.capacity,
            expected_cached_fraction(m, grid)?,
            scenario.popularity_at(t, k)?,
            others_bits,
        )
    }

    /// Redundancy cost seen by an SBS holding `s` bits.
    #[inline]
    pub fn redundancy(&self, s: f64) -> f64 {
        match self.params.redundancy_form {
            RedundancyForm::MeanField => self.redundancy,
            RedundancyForm::Tangent => self.redundancy + self.slope * (s / self.q - self.phi),
            RedundancyForm::OwnState => {
                let x = s / self.q;
                (-self.params.rho1 * x).exp() + self.params.rho2 * x / self.popularity
            }
        }
    }

    /// In-SBS and storage penalties `ν(s - q) + ω(Σs - o)`.
    #[inline]
    pub fn penalties(&self, s: f64) -> f64 {
        let own = s - self.q;
        let total = s + self.others_bits - self.capacity;
        if self.params.hinge_penalties {
            self.params.nu * own.max(0.0) + self.params.omega * total.max(0.0)
        } else {
            self.params.nu * own + self.params.omega * total
        }
    }

    /// The part of the running cost that does not depend on the control.
    #[inline]
    pub fn state_cost(&self, s: f64) -> f64 {
        self.redundancy(s) + self.penalties(s)
    }

    #[inline]
    pub fn running_cost(&self, n: f64, s: f64) -> f64 {
        self.state_cost(s) + backhaul_cost(n, self.q, self.budget)
    }
}
