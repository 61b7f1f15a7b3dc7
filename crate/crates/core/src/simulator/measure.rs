use ndarray::Array2;

use crate::error::{Error, Result};
use crate::simulator::AgentState;
use crate::solver::Grid;

/// Occupancy measure `(1/N) Σ δ_{y_i}` of file `k` (1-based) as a density
/// on `grid`: each agent's unit mass goes to its nearest node.
pub fn empirical_measure(agents: &[AgentState], k: usize, grid: &Grid) -> Result<Array2<f64>> {
    if agents.is_empty() {
        return Err(Error::Domain("empirical measure of zero agents".into()));
    }
    let mut m = grid.zeros_slice();
    let weight = 1.0 / agents.len() as f64;
    for a in agents {
        let s = *a
            .cache_s
            .get(k.wrapping_sub(1))
            .ok_or_else(|| Error::Domain(format!("agent {} has no file {k}", a.id)))?;
        let i = grid.s.nearest(s);
        let j = grid.h.as_ref().map_or(0, |ax| ax.nearest(a.channel_h));
        m[(i, j)] += weight / grid.cell_volume(i, j);
    }
    Ok(m)
}
