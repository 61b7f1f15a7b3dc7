//! Discretization of the per-file state space and the fields living on it.
//!
//! The s-axis (and the optional h-axis) are vertex-centered: nodes sit at
//! uniform points including both endpoints, and each node owns a control
//! volume of width `ds` (half of that at the two boundary nodes). Densities
//! are stored per unit volume, so the probability mass at a node is
//! `m · volume`.

use ndarray::{Array2, Array3, ArrayView2, ArrayViewMut2, Axis};

use crate::error::{Error, Result};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct Axis1 {
    pub lo: f64,
    pub hi: f64,
    pub points: Vec<f64>,
    pub step: f64,
    /// Control-volume width of each node.
    pub weights: Vec<f64>,
}

impl Axis1 {
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Self {
        assert!(n >= 2 && hi > lo);
        let step = (hi - lo) / (n - 1) as f64;
        let points = (0..n).map(|i| lo + step * i as f64).collect();
        let weights = (0..n)
            .map(|i| {
                if i == 0 || i == n - 1 {
                    0.5 * step
                } else {
                    step
                }
            })
            .collect();
        Self {
            lo,
            hi,
            points,
            step,
            weights,
        }
    }

    /// Degenerate single-point axis of unit weight (static channel).
    pub fn single(value: f64) -> Self {
        Self {
            lo: value,
            hi: value,
            points: vec![value],
            step: 1.0,
            weights: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the nearest node to `x` (clamped to the axis).
    pub fn nearest(&self, x: f64) -> usize {
        if self.len() == 1 {
            return 0;
        }
        let r = ((x - self.lo) / self.step).round();
        r.clamp(0.0, (self.len() - 1) as f64) as usize
    }

    /// Linear interpolation weights `(i, w)` with `x ≈ (1-w)·p[i] + w·p[i+1]`.
    pub fn bracket(&self, x: f64) -> (usize, f64) {
        if self.len() == 1 {
            return (0, 0.0);
        }
        let r = ((x - self.lo) / self.step).clamp(0.0, (self.len() - 1) as f64);
        let i = (r.floor() as usize).min(self.len() - 2);
        (i, r - i as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    /// File size q_k; the s-axis spans [0, q].
    pub q: f64,
    pub s: Axis1,
    /// `None` in static-channel mode.
    pub h: Option<Axis1>,
    pub horizon: f64,
    pub num_steps: usize,
}

impl Grid {
    pub fn new(
        q: f64,
        num_s: usize,
        h: Option<(f64, f64, usize)>,
        horizon: f64,
        num_steps: usize,
    ) -> Self {
        Self {
            q,
            s: Axis1::uniform(0.0, q, num_s),
            h: h.map(|(lo, hi, n)| Axis1::uniform(lo, hi, n)),
            horizon,
            num_steps,
        }
    }

    /// Grid for the 1-based file `k` of `scenario`.
    pub fn for_file(scenario: &Scenario, k: usize) -> Result<Self> {
        let q = scenario.file(k)?.size_bits;
        let h = if scenario.channel.static_channel {
            None
        } else {
            let (lo, hi) = scenario.h_range();
            Some((lo, hi, scenario.grid.num_h_points))
        };
        Ok(Self::new(
            q,
            scenario.grid.num_s_points,
            h,
            scenario.horizon_hours,
            scenario.grid.num_time_steps,
        ))
    }

    pub fn ns(&self) -> usize {
        self.s.len()
    }

    pub fn nh(&self) -> usize {
        self.h.as_ref().map_or(1, Axis1::len)
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.num_steps as f64
    }

    pub fn time(&self, step: usize) -> f64 {
        (self.horizon * step as f64 / self.num_steps as f64).min(self.horizon)
    }

    pub fn h_weight(&self, j: usize) -> f64 {
        self.h.as_ref().map_or(1.0, |a| a.weights[j])
    }

    pub fn cell_volume(&self, i: usize, j: usize) -> f64 {
        self.s.weights[i] * self.h_weight(j)
    }

    pub fn zeros_slice(&self) -> Array2<f64> {
        Array2::zeros((self.ns(), self.nh()))
    }

    pub fn mass(&self, m: ArrayView2<f64>) -> f64 {
        let mut total = 0.0;
        for (i, row) in m.outer_iter().enumerate() {
            let ws = self.s.weights[i];
            for (j, v) in row.iter().enumerate() {
                total += v * ws * self.h_weight(j);
            }
        }
        total
    }

    /// Marginal density over s (integrated over h).
    pub fn s_marginal(&self, m: ArrayView2<f64>) -> Vec<f64> {
        m.axis_iter(Axis(0))
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| v * self.h_weight(j))
                    .sum()
            })
            .collect()
    }

    /// Expectation of `f(s, h)` under the density slice `m`.
    pub fn expect(&self, m: ArrayView2<f64>, f: impl Fn(f64, f64) -> f64) -> f64 {
        let h_at = |j: usize| self.h.as_ref().map_or(f64::NAN, |a| a.points[j]);
        let mut total = 0.0;
        for (i, row) in m.outer_iter().enumerate() {
            let (s, ws) = (self.s.points[i], self.s.weights[i]);
            for (j, v) in row.iter().enumerate() {
                total += v * ws * self.h_weight(j) * f(s, h_at(j));
            }
        }
        total
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.ns() == other.ns()
            && self.nh() == other.nh()
            && (self.q - other.q).abs() <= 1e-12 * self.q.max(1.0)
    }

    /// Normalized truncated normal N(mean, std²) on the s-axis, uniform in h.
    pub fn truncated_normal(&self, mean: f64, std: f64) -> Array2<f64> {
        let mut m = self.zeros_slice();
        if std <= 0.0 {
            let i = self.s.nearest(mean);
            for j in 0..self.nh() {
                m[(i, j)] = 1.0;
            }
        } else {
            for i in 0..self.ns() {
                let z = (self.s.points[i] - mean) / std;
                let w = (-0.5 * z * z).exp();
                for j in 0..self.nh() {
                    m[(i, j)] = w;
                }
            }
        }
        let mass = self.mass(m.view());
        m /= mass;
        m
    }

    /// Normalized point mass at the node nearest to `(s, h)`.
    pub fn point_mass(&self, s: f64, h: Option<f64>) -> Array2<f64> {
        let mut m = self.zeros_slice();
        let i = self.s.nearest(s);
        let j = match (&self.h, h) {
            (Some(a), Some(x)) => a.nearest(x),
            _ => 0,
        };
        m[(i, j)] = 1.0 / self.cell_volume(i, j);
        m
    }
}

/// Values over grid × time, indexed `[step, s, h]` for steps `0..=num_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub data: Array3<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            data: Array3::zeros((grid.num_steps + 1, grid.ns(), grid.nh())),
        }
    }

    pub fn num_slices(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn slice(&self, step: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), step)
    }

    pub fn slice_mut(&mut self, step: usize) -> ArrayViewMut2<'_, f64> {
        self.data.index_axis_mut(Axis(0), step)
    }

    pub fn last(&self) -> ArrayView2<'_, f64> {
        self.slice(self.num_slices() - 1)
    }
}

/// Density m_{k,t}(y); nonnegative with unit mass at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField(pub Field);

/// Value function v_{k,t}(y).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField(pub Field);

/// Feedback control n_{k,t}(y) ∈ [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyField(pub Field);

impl DensityField {
    pub fn slice(&self, step: usize) -> ArrayView2<'_, f64> {
        self.0.slice(step)
    }
}

impl ValueField {
    pub fn slice(&self, step: usize) -> ArrayView2<'_, f64> {
        self.0.slice(step)
    }
}

impl PolicyField {
    pub fn slice(&self, step: usize) -> ArrayView2<'_, f64> {
        self.0.slice(step)
    }

    /// Control at `(step, s, h)`, linearly interpolated between s-nodes and
    /// taken at the nearest h-node.
    pub fn control_at(&self, grid: &Grid, step: usize, s: f64, h: Option<f64>) -> Result<f64> {
        if step >= self.0.num_slices() {
            return Err(Error::Domain(format!(
                "policy has no slice for step {step} (covers 0..{})",
                self.0.num_slices()
            )));
        }
        if !(s >= -1e-9 && s <= grid.q + 1e-9) {
            return Err(Error::Domain(format!(
                "state s = {s} outside [0, {}]",
                grid.q
            )));
        }
        let j = match (&grid.h, h) {
            (Some(a), Some(x)) => a.nearest(x),
            _ => 0,
        };
        let (i, w) = grid.s.bracket(s);
        let slice = self.0.slice(step);
        Ok((1.0 - w) * slice[(i, j)] + w * slice[(i + 1, j)])
    }
}

/// L1 distance `Σ |a - b| · cell volume` between two density slices.
pub fn l1_distance(grid: &Grid, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    let shape = [grid.ns(), grid.nh()];
    if a.shape() != shape || b.shape() != shape {
        return Err(Error::GridMismatch(format!(
            "slices {:?} and {:?} do not match grid {:?}",
            a.shape(),
            b.shape(),
            shape
        )));
    }
    let mut total = 0.0;
    for ((i, j), x) in a.indexed_iter() {
        total += (x - b[(i, j)]).abs() * grid.cell_volume(i, j);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_examples() {
        let g = Grid::new(1.0, 16, None, 1.0, 4);
        let a = g.point_mass(0.0, None);
        assert_eq!(l1_distance(&g, a.view(), a.view()).unwrap(), 0.0);
        let b = g.point_mass(1.0, None);
        assert!((l1_distance(&g, a.view(), b.view()).unwrap() - 2.0).abs() < 1e-12);

        // Two nodes at s = 0 and s = 1, each owning a half cell of width 0.5.
        // Uniform density 1 vs. point mass at s = 0 (density 1/0.5 = 2):
        // |1 - 2|·0.5 + |1 - 0|·0.5 = 1.
        let g2 = Grid::new(1.0, 2, None, 1.0, 1);
        let uniform = Array2::from_elem((2, 1), 1.0);
        let point = g2.point_mass(0.0, None);
        assert!((l1_distance(&g2, uniform.view(), point.view()).unwrap() - 1.0).abs() < 1e-15);

        let g3 = Grid::new(1.0, 17, None, 1.0, 4);
        assert!(l1_distance(&g, a.view(), g3.zeros_slice().view()).is_err());
    }

    #[test]
    fn truncated_normal_is_normalized() {
        let g = Grid::new(1.0, 81, Some((0.0, 2.0, 9)), 24.0, 10);
        let m = g.truncated_normal(0.2, 0.1);
        assert!((g.mass(m.view()) - 1.0).abs() < 1e-14);
        let mean = g.expect(m.view(), |s, _| s);
        assert!(mean > 0.2 && mean < 0.23, "mean {mean}");
    }

    #[test]
    fn bracket_and_nearest() {
        let a = Axis1::uniform(0.0, 1.0, 11);
        assert_eq!(a.nearest(0.26), 3);
        let (i, w) = a.bracket(0.25);
        assert_eq!(i, 2);
        assert!((w - 0.5).abs() < 1e-12);
        assert_eq!(a.bracket(1.0), (9, 1.0));
    }
}
