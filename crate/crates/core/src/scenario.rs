//! Experiment description: file catalog, popularity schedule, dynamics and
//! cost parameters, discretization and solver/simulator knobs.
//!
//! Scenarios are stored as TOML documents (see the README for the full
//! schema). Every section is optional except `schema_version` and the
//! `[[files]]` list; omitted keys take the defaults defined here.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Slack used when checking that a time lies inside the horizon.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSpec {
    /// 1-based file index.
    pub id: usize,
    /// Segment size q_k (normalized bits).
    pub size_bits: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopularityKind {
    StaticZipf,
    PiecewiseLinear,
    Sinusoidal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variability {
    #[serde(rename = "LVP")]
    Large,
    #[serde(rename = "SVP")]
    Small,
}

impl Variability {
    pub fn label(self) -> &'static str {
        match self {
            Variability::Large => "LVP",
            Variability::Small => "SVP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub time_hours: f64,
    /// Unnormalized per-file weights; renormalized after interpolation.
    pub weights: Vec<f64>,
}

/// Time-varying request popularity.
///
/// * `static-zipf`: Zipf(`zipf_beta`) at all times.
/// * `piecewise-linear`: linear interpolation between keyframes, held
///   constant outside the keyframe range, renormalized to sum to one.
/// * `sinusoidal`: `w_k(t) = zipf_k * (1 + a sin(2π t / P - 2π (k-1) / V))`,
///   renormalized, with `a = amplitude` and `P = period_hours`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopularitySchedule {
    pub kind: PopularityKind,
    pub zipf_beta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variability: Option<Variability>,
    pub amplitude: f64,
    pub period_hours: f64,
    pub keyframes: Vec<Keyframe>,
}

impl Default for PopularitySchedule {
    fn default() -> Self {
        Self {
            kind: PopularityKind::StaticZipf,
            zipf_beta: 0.8,
            variability: None,
            amplitude: 0.5,
            period_hours: 24.0,
            keyframes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub alpha: f64,
    pub mu_h: f64,
    pub sigma_h: f64,
    pub static_channel: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            mu_h: 1.0,
            sigma_h: 0.2,
            static_channel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StorageConfig {
    /// Storage capacity o (bits).
    pub capacity: f64,
    pub sigma_s: f64,
    pub removal_beta: f64,
}

impl Default for StorageConfig {
    fn default() -> Self {
        Self {
            capacity: 0.4,
            sigma_s: 0.05,
            removal_beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetKeyframe {
    pub time_hours: f64,
    pub budgets: Vec<f64>,
}

/// Per-file backhaul budget B_{k,t}: constant `budget` for every file, or
/// linear interpolation between keyframes when any are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackhaulConfig {
    pub budget: f64,
    pub keyframes: Vec<BudgetKeyframe>,
}

impl Default for BackhaulConfig {
    fn default() -> Self {
        Self {
            budget: 0.5,
            keyframes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConfig {
    pub rho1: f64,
    pub rho2: f64,
    pub nu: f64,
    pub omega: f64,
    pub terminal_c: f64,
    pub terminal_lambda_min: f64,
    /// Use `max(0, ·)` instead of the signed-linear storage penalties.
    pub hinge_penalties: bool,
    pub redundancy_form: RedundancyForm,
}

/// How the redundancy cost `c(x) = exp(-ϱ₁ x) + ϱ₂ x / Ω` reaches an SBS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RedundancyForm {
    /// `c(φ)` at the population mean only; independent of the SBS's own state.
    MeanField,
    /// Tangent at the mean: `c(φ) + c'(φ)(s/q - φ)`.
    Tangent,
    /// `c(s/q)` at the SBS's own cached fraction.
    OwnState,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            rho1: 4.0,
            rho2: 0.6,
            nu: 0.0,
            omega: 0.0,
            terminal_c: 10.0,
            terminal_lambda_min: 0.1,
            hinge_penalties: false,
            redundancy_form: RedundancyForm::OwnState,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub power_w: f64,
    /// Background noise N₀ in watts (-80 dBm = 1e-11 W).
    pub noise_w: f64,
    /// Service rate per nat of capacity, in file-size units per hour.
    pub bandwidth: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            power_w: 1.0,
            noise_w: 1e-11,
            bandwidth: 60.0,
        }
    }
}

/// Initial density ρ₀: normal N(mean·q, (std·q)²) truncated to [0, q].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub mean: f64,
    pub std: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            mean: 0.2,
            std: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub num_s_points: usize,
    pub num_h_points: usize,
    pub num_time_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_max: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            num_s_points: 81,
            num_h_points: 21,
            num_time_steps: 1440,
            h_min: None,
            h_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlRule {
    /// n* = (B + 1/∂ₛv) / q, from the first-order condition of the Hamiltonian.
    FirstOrder,
    /// n* = (B - 1/(2∂ₛv)) / q, the alternative closed form kept for comparison.
    Proposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub damping: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub control_rule: ControlRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iters: 100,
            tol: 1e-4,
            control_rule: ControlRule::FirstOrder,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZetaClosure {
    /// ζ̄ from the agents' empirical measure, mirroring the solver closure.
    MeanField,
    /// ζ̄ as a one-hour running mean of bits actually delivered per agent.
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub num_agents: usize,
    pub spacing_units: f64,
    pub coverage_radius: f64,
    pub seed: u64,
    /// Poisson request rate per SBS, per hour.
    pub request_rate: f64,
    pub zeta_closure: ZetaClosure,
    pub baseline_window_hours: f64,
    /// Inter-SBS distances swept by the fig3 experiment.
    pub spacings: Vec<f64>,
    /// Seeds per sweep cell in the fig3 experiment.
    pub num_seeds: usize,
    /// Solver steps per simulation step.
    pub time_stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_agents: 100,
            spacing_units: 1.0,
            coverage_radius: 2.0,
            seed: 1,
            request_rate: 1.0,
            zeta_closure: ZetaClosure::MeanField,
            baseline_window_hours: 24.0,
            spacings: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            num_seeds: 5,
            time_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default = "default_id")]
    pub id: String,
    #[serde(default = "default_horizon")]
    pub horizon_hours: f64,
    #[serde(default)]
    pub files: Vec<FileSpec>,
    #[serde(default)]
    pub popularity: PopularitySchedule,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub storage: StorageConfig,
    #[serde(default)]
    pub backhaul: BackhaulConfig,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sim: SimConfig,
}

fn default_id() -> String {
    "scenario".to_string()
}

fn default_horizon() -> f64 {
    24.0
}

/// Zipf request probability `k^-β / Σ_{i=1..V} i^-β` for 1-based `k`.
pub fn zipf_popularity(k: usize, num_files: usize, beta: f64) -> Result<f64> {
    if k == 0 || k > num_files {
        return Err(Error::Domain(format!(
            "file index {k} outside 1..={num_files}"
        )));
    }
    if !(beta >= 0.0) {
        return Err(Error::Domain(format!("zipf beta {beta} must be >= 0")));
    }
    let norm: f64 = (1..=num_files).map(|i| (i as f64).powf(-beta)).sum();
    Ok((k as f64).powf(-beta) / norm)
}

fn zipf_weights(num_files: usize, beta: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=num_files).map(|i| (i as f64).powf(-beta)).collect();
    let norm: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / norm).collect()
}

fn normalize(mut w: Vec<f64>) -> Vec<f64> {
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x /= sum;
    }
    w
}

impl PopularitySchedule {
    /// Popularity vector over all `num_files` files at time `t` (no horizon check).
    pub fn vector_at(&self, t: f64, num_files: usize) -> Vec<f64> {
        match self.kind {
            PopularityKind::StaticZipf => zipf_weights(num_files, self.zipf_beta),
            PopularityKind::PiecewiseLinear => {
                let kf = &self.keyframes;
                let first = &kf[0];
                let last = &kf[kf.len() - 1];
                if t <= first.time_hours {
                    return normalize(first.weights.clone());
                }
                if t >= last.time_hours {
                    return normalize(last.weights.clone());
                }
                let idx = kf.partition_point(|f| f.time_hours <= t);
                let (a, b) = (&kf[idx - 1], &kf[idx]);
                if t == a.time_hours {
                    return normalize(a.weights.clone());
                }
                let w = (t - a.time_hours) / (b.time_hours - a.time_hours);
                normalize(
                    a.weights
                        .iter()
                        .zip(&b.weights)
                        .map(|(x, y)| (1.0 - w) * x + w * y)
                        .collect(),
                )
            }
            PopularityKind::Sinusoidal => {
                let base = zipf_weights(num_files, self.zipf_beta);
                let v = num_files as f64;
                normalize(
                    base.iter()
                        .enumerate()
                        .map(|(i, z)| {
                            let phase = 2.0 * PI * t / self.period_hours - 2.0 * PI * i as f64 / v;
                            z * (1.0 + self.amplitude * phase.sin())
                        })
                        .collect(),
                )
            }
        }
    }
}

/// Load, validate and return the scenario stored at `path`.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    load_scenario_with(path, &[])
}

/// Like [`load_scenario`], applying dotted-path `key=value` overrides first.
pub fn load_scenario_with(path: impl AsRef<Path>, overrides: &[String]) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::from_toml_str(&text, overrides)
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override `{assignment}` is not KEY=VALUE")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Parse(format!("override key `{key}` is malformed")));
    }
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Error::Parse(format!("override `{key}`: `{part}` is not a section")))?;
    }
    cursor.insert(
        parts[parts.len() - 1].to_string(),
        parse_override_value(value.trim()),
    );
    Ok(())
}

impl Scenario {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string().trim_end().to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let scenario: Scenario = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string().trim_end().to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    pub fn num_files(&self) -> usize {
        self.files.len()
    }

    pub fn file(&self, k: usize) -> Result<&FileSpec> {
        if k == 0 || k > self.files.len() {
            return Err(Error::Domain(format!(
                "file index {k} outside 1..={}",
                self.files.len()
            )));
        }
        Ok(&self.files[k - 1])
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= -TIME_EPS && t <= self.horizon_hours + TIME_EPS) {
            return Err(Error::Domain(format!(
                "time {t} outside horizon [0, {}]",
                self.horizon_hours
            )));
        }
        Ok(())
    }

    /// Popularity vector p_{·,t}.
    pub fn popularity_vector(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        Ok(self.popularity.vector_at(t, self.num_files()))
    }

    /// Popularity p_{k,t} of the 1-based file `k`.
    pub fn popularity_at(&self, t: f64, k: usize) -> Result<f64> {
        self.file(k)?;
        Ok(self.popularity_vector(t)?[k - 1])
    }

    /// Backhaul budget B_{k,t} for the 1-based file `k`.
    pub fn budget_at(&self, t: f64, k: usize) -> Result<f64> {
        self.file(k)?;
        self.check_time(t)?;
        let kf = &self.backhaul.keyframes;
        if kf.is_empty() {
            return Ok(self.backhaul.budget);
        }
        let i = k - 1;
        if t <= kf[0].time_hours {
            return Ok(kf[0].budgets[i]);
        }
        let last = &kf[kf.len() - 1];
        if t >= last.time_hours {
            return Ok(last.budgets[i]);
        }
        let idx = kf.partition_point(|f| f.time_hours <= t);
        let (a, b) = (&kf[idx - 1], &kf[idx]);
        let w = (t - a.time_hours) / (b.time_hours - a.time_hours);
        Ok((1.0 - w) * a.budgets[i] + w * b.budgets[i])
    }

    pub fn dt(&self) -> f64 {
        self.horizon_hours / self.grid.num_time_steps as f64
    }

    pub fn time_at(&self, step: usize) -> f64 {
        (self.horizon_hours * step as f64 / self.grid.num_time_steps as f64).min(self.horizon_hours)
    }

    /// The h-axis range used by the two-dimensional solver.
    pub fn h_range(&self) -> (f64, f64) {
        let c = &self.channel;
        let sd = (c.sigma_h * c.sigma_h / (4.0 * c.alpha)).sqrt();
        let half = (4.0 * sd).max(0.5 * c.mu_h);
        (
            self.grid.h_min.unwrap_or(c.mu_h - half),
            self.grid.h_max.unwrap_or(c.mu_h + half),
        )
    }

    pub fn validate(&self) -> Result<()> {
        fn pos(key: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(key, format!("must be > 0 (got {v})")))
            }
        }
        fn nonneg(key: &str, v: f64) -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(key, format!("must be >= 0 (got {v})")))
            }
        }

        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema_version",
                format!("must be {SCHEMA_VERSION} (got {})", self.schema_version),
            ));
        }
        pos("horizon_hours", self.horizon_hours)?;
        if self.files.is_empty() {
            return Err(Error::invalid("files", "must list at least one file"));
        }
        for (i, f) in self.files.iter().enumerate() {
            if f.id != i + 1 {
                return Err(Error::invalid(
                    "files.id",
                    format!(
                        "ids must be contiguous from 1 (entry {} has id {})",
                        i + 1,
                        f.id
                    ),
                ));
            }
            pos("files.size_bits", f.size_bits)?;
        }
        let v = self.files.len();

        let p = &self.popularity;
        nonneg("popularity.zipf_beta", p.zipf_beta)?;
        match p.kind {
            PopularityKind::StaticZipf => {}
            PopularityKind::PiecewiseLinear => {
                if p.keyframes.is_empty() {
                    return Err(Error::invalid(
                        "popularity.keyframes",
                        "must contain at least one keyframe for piecewise-linear",
                    ));
                }
                for (i, kf) in p.keyframes.iter().enumerate() {
                    if !kf.time_hours.is_finite() {
                        return Err(Error::invalid(
                            "popularity.keyframes.time_hours",
                            "must be finite",
                        ));
                    }
                    if i > 0 && kf.time_hours <= p.keyframes[i - 1].time_hours {
                        return Err(Error::invalid(
                            "popularity.keyframes.time_hours",
                            "must be strictly increasing",
                        ));
                    }
                    if kf.weights.len() != v {
                        return Err(Error::invalid(
                            "popularity.keyframes.weights",
                            format!(
                                "must have one entry per file ({v}), got {}",
                                kf.weights.len()
                            ),
                        ));
                    }
                    if kf.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
                        || kf.weights.iter().sum::<f64>() <= 0.0
                    {
                        return Err(Error::invalid(
                            "popularity.keyframes.weights",
                            "entries must be >= 0 with a positive sum",
                        ));
                    }
                }
            }
            PopularityKind::Sinusoidal => {
                if !(0.0..1.0).contains(&p.amplitude) {
                    return Err(Error::invalid("popularity.amplitude", "must lie in [0, 1)"));
                }
                pos("popularity.period_hours", p.period_hours)?;
            }
        }

        let c = &self.channel;
        pos("channel.alpha", c.alpha)?;
        pos("channel.mu_h", c.mu_h)?;
        nonneg("channel.sigma_h", c.sigma_h)?;

        let s = &self.storage;
        pos("storage.capacity", s.capacity)?;
        nonneg("storage.sigma_s", s.sigma_s)?;
        nonneg("storage.removal_beta", s.removal_beta)?;

        let b = &self.backhaul;
        nonneg("backhaul.budget", b.budget)?;
        for (i, kf) in b.keyframes.iter().enumerate() {
            if i > 0 && kf.time_hours <= b.keyframes[i - 1].time_hours {
                return Err(Error::invalid(
                    "backhaul.keyframes.time_hours",
                    "must be strictly increasing",
                ));
            }
            if kf.budgets.len() != v {
                return Err(Error::invalid(
                    "backhaul.keyframes.budgets",
                    format!("must have one entry per file ({v})"),
                ));
            }
            for x in &kf.budgets {
                nonneg("backhaul.keyframes.budgets", *x)?;
            }
        }

        let cost = &self.cost;
        pos("cost.rho1", cost.rho1)?;
        pos("cost.rho2", cost.rho2)?;
        nonneg("cost.nu", cost.nu)?;
        nonneg("cost.omega", cost.omega)?;
        nonneg("cost.terminal_c", cost.terminal_c)?;
        if !(0.0..=1.0).contains(&cost.terminal_lambda_min) {
            return Err(Error::invalid(
                "cost.terminal_lambda_min",
                "must lie in [0, 1]",
            ));
        }

        pos("radio.power_w", self.radio.power_w)?;
        pos("radio.noise_w", self.radio.noise_w)?;
        pos("radio.bandwidth", self.radio.bandwidth)?;

        nonneg("initial.mean", self.initial.mean)?;
        nonneg("initial.std", self.initial.std)?;

        let g = &self.grid;
        if g.num_s_points < 3 {
            return Err(Error::invalid("grid.num_s_points", "must be >= 3"));
        }
        if g.num_time_steps == 0 {
            return Err(Error::invalid("grid.num_time_steps", "must be >= 1"));
        }
        if !c.static_channel {
            if g.num_h_points < 3 {
                return Err(Error::invalid(
                    "grid.num_h_points",
                    "must be >= 3 when channel.static_channel = false",
                ));
            }
            let (lo, hi) = self.h_range();
            if !(lo < hi) {
                return Err(Error::invalid("grid.h_min", "must be < grid.h_max"));
            }
        }

        let sv = &self.solver;
        if !(sv.damping > 0.0 && sv.damping <= 1.0) {
            return Err(Error::invalid("solver.damping", "must lie in (0, 1]"));
        }
        if sv.max_iters == 0 {
            return Err(Error::invalid("solver.max_iters", "must be >= 1"));
        }
        if !(sv.tol >= 0.0) {
            return Err(Error::invalid("solver.tol", "must be >= 0"));
        }

        let sim = &self.sim;
        if sim.num_agents == 0 {
            return Err(Error::invalid("sim.num_agents", "must be >= 1"));
        }
        pos("sim.spacing_units", sim.spacing_units)?;
        nonneg("sim.coverage_radius", sim.coverage_radius)?;
        nonneg("sim.request_rate", sim.request_rate)?;
        nonneg("sim.baseline_window_hours", sim.baseline_window_hours)?;
        for x in &sim.spacings {
            pos("sim.spacings", *x)?;
        }
        if sim.num_seeds == 0 {
            return Err(Error::invalid("sim.num_seeds", "must be >= 1"));
        }
        if sim.time_stride == 0 {
            return Err(Error::invalid("sim.time_stride", "must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(extra: &str) -> String {
        format!("schema_version = 1\n[[files]]\nid = 1\nsize_bits = 1.0\n[[files]]\nid = 2\nsize_bits = 1.0\n{extra}")
    }

    #[test]
    fn zipf_examples() {
        for k in 1..=5 {
            assert!((zipf_popularity(k, 5, 0.0).unwrap() - 0.2).abs() < 1e-15);
        }
        assert!((zipf_popularity(1, 3, 1.0).unwrap() - 6.0 / 11.0).abs() < 1e-15);
        assert!((zipf_popularity(2, 2, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(zipf_popularity(0, 3, 1.0).is_err());
        assert!(zipf_popularity(4, 3, 1.0).is_err());
    }

    #[test]
    fn piecewise_midpoint_and_endpoints() {
        let sc = Scenario::from_toml_str(
            &minimal(
                "[popularity]\nkind = \"piecewise-linear\"\n\
                 [[popularity.keyframes]]\ntime_hours = 0.0\nweights = [0.1, 0.9]\n\
                 [[popularity.keyframes]]\ntime_hours = 24.0\nweights = [0.9, 0.1]\n",
            ),
            &[],
        )
        .unwrap();
        assert!((sc.popularity_at(12.0, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((sc.popularity_at(0.0, 1).unwrap() - 0.1).abs() < 1e-15);
        assert!((sc.popularity_at(24.0, 2).unwrap() - 0.1).abs() < 1e-15);
        assert!(sc.popularity_at(25.0, 1).is_err());
        assert!(sc.popularity_at(-1.0, 1).is_err());
    }

    #[test]
    fn static_zipf_schedule() {
        let text = "schema_version = 1\n[popularity]\nzipf_beta = 1.0\n\
                    [[files]]\nid = 1\nsize_bits = 1.0\n[[files]]\nid = 2\nsize_bits = 1.0\n\
                    [[files]]\nid = 3\nsize_bits = 1.0\n";
        let sc = Scenario::from_toml_str(text, &[]).unwrap();
        for t in [0.0, 7.5, 24.0] {
            assert!((sc.popularity_at(t, 1).unwrap() - 6.0 / 11.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_capacity_and_empty_input() {
        let err =
            Scenario::from_toml_str(&minimal("[storage]\ncapacity = -1.0\n"), &[]).unwrap_err();
        match err {
            Error::Invalid { key, .. } => assert_eq!(key, "storage.capacity"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Scenario::from_toml_str("", &[]),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            Scenario::from_toml_str(&minimal("[storage]\nbogus = 1\n"), &[]),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn overrides_use_dotted_paths() {
        let sc = Scenario::from_toml_str(
            &minimal(""),
            &[
                "solver.tol=inf".into(),
                "sim.seed=9".into(),
                "id=fig".into(),
            ],
        )
        .unwrap();
        assert!(sc.solver.tol.is_infinite());
        assert_eq!(sc.sim.seed, 9);
        assert_eq!(sc.id, "fig");
        assert!(Scenario::from_toml_str(&minimal(""), &["solver.nope=1".into()]).is_err());
        assert!(Scenario::from_toml_str(&minimal(""), &["solver.damping=0".into()]).is_err());
    }

    #[test]
    fn round_trip() {
        let sc = Scenario::from_toml_str(
            &minimal(
                "[popularity]\nkind = \"sinusoidal\"\nvariability = \"SVP\"\n[grid]\nh_min = 0.5\n",
            ),
            &[],
        )
        .unwrap();
        let again = Scenario::from_toml_str(&sc.to_toml_string(), &[]).unwrap();
        assert_eq!(sc, again);
    }
}
