/// Position on the torus `[0, side)²`.
pub type Point = (f64, f64);

/// A request currently being served by an SBS.
#[derive(Debug, Clone, PartialEq)]
pub struct Serving {
    pub request: usize,
    /// 1-based file index.
    pub file: usize,
    /// Bits this SBS has delivered for the request so far.
    pub delivered: f64,
    /// Time service started (hours).
    pub start: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub position: Point,
    pub channel_h: f64,
    /// Cached bits per file, `cache_s[k - 1] ∈ [0, q_k]`.
    pub cache_s: Vec<f64>,
    pub serving: Option<Serving>,
}

impl AgentState {
    pub fn total_cached(&self) -> f64 {
        self.cache_s.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestEvent {
    pub id: usize,
    pub time: f64,
    pub position: Point,
    /// 1-based file index.
    pub file: usize,
}

/// Lattice of `⌈√n⌉²` sites at the given spacing; the first `n` are used,
/// filled row by row from the origin.
pub fn place_sbs(n: usize, spacing: f64) -> Vec<Point> {
    let side = lattice_side(n);
    (0..n)
        .map(|i| ((i % side) as f64 * spacing, (i / side) as f64 * spacing))
        .collect()
}

pub(crate) fn lattice_side(n: usize) -> usize {
    let mut side = (n as f64).sqrt() as usize;
    while side * side < n {
        side += 1;
    }
    side.max(1)
}

/// Distance on a square torus of side `length`.
pub fn torus_distance(a: Point, b: Point, length: f64) -> f64 {
    let wrap = |d: f64| {
        let d = d.abs() % length;
        d.min(length - d)
    };
    wrap(a.0 - b.0).hypot(wrap(a.1 - b.1))
}
