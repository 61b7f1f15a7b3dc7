//! Stochastic dynamics of a single SBS: the Ornstein-Uhlenbeck channel,
//! SINR and service rate, per-request download rate, and the drift of the
//! per-file storage state.

/// Mean-reverting channel `dh = (α/2)(μ_h - h) dt + (σ_h/2) dB`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub alpha: f64,
    pub mu_h: f64,
    pub sigma_h: f64,
}

impl ChannelParams {
    /// Diffusion amplitude multiplying dB.
    pub fn diffusion(&self) -> f64 {
        0.5 * self.sigma_h
    }

    /// Stationary variance `σ_h² / (4α)`.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma_h * self.sigma_h / (4.0 * self.alpha)
    }

    /// Closed-form mean at time `t` starting from `h0`.
    pub fn mean_at(&self, h0: f64, t: f64) -> f64 {
        (-0.5 * self.alpha * t).exp() * (h0 - self.mu_h) + self.mu_h
    }
}

pub fn channel_drift(h: f64, params: &ChannelParams) -> f64 {
    0.5 * params.alpha * (params.mu_h - h)
}

/// One Euler–Maruyama step. Clamping is left to the caller.
#[inline]
pub fn euler_step(state: f64, drift: f64, diffusion: f64, dt: f64, gaussian: f64) -> f64 {
    state + drift * dt + diffusion * dt.sqrt() * gaussian
}

/// SINR with the interference sum normalized by the number of transmitters
/// `N = 1 + interferer_terms.len()`.
pub fn sinr(own_power: f64, own_gain: f64, interferer_terms: &[f64], noise: f64) -> f64 {
    let n = 1.0 + interferer_terms.len() as f64;
    let interference: f64 = interferer_terms.iter().sum();
    sinr_from_sum(own_power, own_gain, interference, n, noise)
}

/// SINR from a precomputed interference sum over `n - 1` interferers.
#[inline]
pub fn sinr_from_sum(
    own_power: f64,
    own_gain: f64,
    interference_sum: f64,
    n: f64,
    noise: f64,
) -> f64 {
    own_power * own_gain / (noise + interference_sum / n)
}

/// κ = ln(1 + γ).
#[inline]
pub fn service_rate(gamma: f64) -> f64 {
    gamma.ln_1p()
}

/// ζ = min(κ, bits still available to the served user).
#[inline]
pub fn download_rate_zeta(kappa: f64, available_undownloaded_bits: f64) -> f64 {
    kappa.min(available_undownloaded_bits)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageDriftInputs {
    pub control_n: f64,
    pub file_size_q: f64,
    pub removal_beta: f64,
    pub popularity_p: f64,
    pub mean_downloaded_zeta_bar: f64,
}

/// Removal rate `β (1 - p) ζ̄`.
#[inline]
pub fn removal_rate(removal_beta: f64, popularity: f64, zeta_bar: f64) -> f64 {
    removal_beta * (1.0 - popularity) * zeta_bar
}

/// Storage drift `n q - β (1 - p) ζ̄`.
#[inline]
pub fn storage_drift(inputs: &StorageDriftInputs) -> f64 {
    inputs.control_n * inputs.file_size_q
        - removal_rate(
            inputs.removal_beta,
            inputs.popularity_p,
            inputs.mean_downloaded_zeta_bar,
        )
}
