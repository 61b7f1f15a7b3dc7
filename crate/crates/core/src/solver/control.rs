use crate::costs::StepCost;
use crate::dynamics::{channel_drift, ChannelParams};
use crate::scenario::ControlRule;

/// Relative margin keeping the control strictly below `B / q`.
pub const BUDGET_MARGIN: f64 = 1e-6;

/// Largest admissible control `min(1, B/q - ε_B)` with `ε_B = 1e-6 · B/q`.
#[inline]
pub fn control_cap(q: f64, budget: f64) -> f64 {
    let ratio = budget / q;
    (ratio - BUDGET_MARGIN * ratio).clamp(0.0, 1.0)
}

/// Closed-form minimizer of `n q ∂ₛv - ln(B - q n)` over `[0, cap]`:
/// `n* = (B + 1/∂ₛv) / q`, or 0 when `∂ₛv ≥ 0`.
#[inline]
pub fn optimal_control(dv_ds: f64, q: f64, budget: f64) -> f64 {
    optimal_control_with(ControlRule::FirstOrder, dv_ds, q, budget)
}

#[inline]
pub fn optimal_control_with(rule: ControlRule, dv_ds: f64, q: f64, budget: f64) -> f64 {
    if !(dv_ds < 0.0) {
        return 0.0;
    }
    let raw = match rule {
        ControlRule::FirstOrder => (budget + 1.0 / dv_ds) / q,
        ControlRule::Proposition => (budget - 0.5 / dv_ds) / q,
    };
    raw.clamp(0.0, control_cap(q, budget))
}

/// Hamiltonian `[n q - R] ∂ₛv + (α/2)(μ_h - h) ∂ₕv + J(n, s)`; the channel
/// term is dropped when `channel` is `None` (static channel).
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian(
    n: f64,
    s: f64,
    h: f64,
    dv_ds: f64,
    dv_dh: f64,
    removal: f64,
    cost: &StepCost,
    channel: Option<&ChannelParams>,
) -> f64 {
    let drift = n * cost.q - removal;
    let channel_term = channel.map_or(0.0, |c| channel_drift(h, c) * dv_dh);
    drift * dv_ds + channel_term + cost.running_cost(n, s)
}
