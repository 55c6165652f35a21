//! Bayesian hierarchical AR(1) model for age-standardized net migration
//! rates.
//!
//! ```text
//! y_{i,t} = μ_i + φ_i (y_{i,t−1} − μ_i) + σ_i ε_{i,t},   ε ~ N(0, 1)
//! y_{i,1} ~ N(μ_i, σ_i² / (1 − φ_i²))
//! μ_i ~ N(μ0, τ²)             μ0 ~ N(m0, s0²),  τ² ~ InvGamma(a_τ, b_τ)
//! φ_i ~ Beta(m κ, (1 − m) κ)  m ~ Beta(a_m, b_m)
//! σ_i ~ HalfNormal(s) on [σ_min, ∞),  s² ~ InvGamma(a_s, b_s)
//! ```
//!
//! Each step is one five-year period. The prior constants are engine
//! defaults chosen to be broad on the per-thousand annual rate scale; they
//! are configuration, not estimates.

mod diagnostics;
mod sampler;

pub use diagnostics::split_rhat;
pub use sampler::fit_mcmc;

use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub mu0_mean: f64,
    pub mu0_sd: f64,
    pub tau2_shape: f64,
    pub tau2_scale: f64,
    /// Beta concentration `κ` of the persistence distribution.
    pub phi_concentration: f64,
    pub phi_mean_alpha: f64,
    pub phi_mean_beta: f64,
    pub sigma_scale2_shape: f64,
    pub sigma_scale2_scale: f64,
    /// Lower bound `σ_min` on innovation scales.
    pub sigma_floor: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            mu0_mean: 0.0,
            mu0_sd: 10.0,
            tau2_shape: 1.0,
            tau2_scale: 1.0,
            phi_concentration: 4.0,
            phi_mean_alpha: 1.0,
            phi_mean_beta: 1.0,
            sigma_scale2_shape: 1.0,
            sigma_scale2_scale: 1.0,
            sigma_floor: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    pub chains: usize,
    pub burn_in: usize,
    /// Post-burn-in iterations per chain.
    pub iterations: usize,
    pub thin: usize,
    pub seed: u64,
    pub priors: Priors,
    /// Run chains on the rayon pool instead of sequentially.
    pub parallel_chains: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            burn_in: 1000,
            iterations: 1000,
            thin: 1,
            seed: 0,
            priors: Priors::default(),
            parallel_chains: true,
        }
    }
}

/// One joint draw of all model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalAr1 {
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
    pub sigma: Vec<f64>,
    pub mu0: f64,
    pub tau: f64,
    pub phi_mean: f64,
    pub sigma_scale: f64,
}

impl HierarchicalAr1 {
    pub fn is_valid(&self) -> bool {
        self.phi.iter().all(|p| *p > 0.0 && *p < 1.0)
            && self.sigma.iter().all(|s| *s > 0.0)
            && self.tau > 0.0
            && self.sigma_scale > 0.0
    }

    /// Names and values of the world-level parameters.
    pub fn hyperparameters(&self) -> [(&'static str, f64); 4] {
        [
            ("mu0", self.mu0),
            ("tau", self.tau),
            ("phi_mean", self.phi_mean),
            ("sigma_scale", self.sigma_scale),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AcceptanceRates {
    pub phi: f64,
    pub sigma: f64,
    pub phi_mean: f64,
    pub sigma_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainDiagnostics {
    pub acceptance: AcceptanceRates,
    /// Split-R̂ of each world-level parameter.
    pub rhat: Vec<(String, f64)>,
    /// Largest split-R̂ over the country means.
    pub max_rhat_mu: f64,
    pub warnings: Vec<String>,
}

impl ChainDiagnostics {
    pub fn max_hyper_rhat(&self) -> f64 {
        self.rhat.iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample {
    pub countries: Vec<String>,
    pub draws: Vec<HierarchicalAr1>,
    pub seed: u64,
    pub diagnostics: ChainDiagnostics,
}

impl PosteriorSample {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn country_index(&self, id: &str) -> Option<usize> {
        self.countries.iter().position(|c| c == id)
    }

    /// Draw used by trajectory `j`.
    pub fn draw_for_trajectory(&self, j: usize) -> &HierarchicalAr1 {
        &self.draws[j % self.draws.len()]
    }

    /// Posterior draws of one per-country parameter.
    pub fn country_values(&self, i: usize, pick: fn(&HierarchicalAr1, usize) -> f64) -> Vec<f64> {
        self.draws.iter().map(|d| pick(d, i)).collect()
    }
}

/// One-period-ahead rate: `μ_i + φ_i (current − μ_i) + σ_i ε`.
pub fn draw_next_rate<R: Rng + ?Sized>(draw: &HierarchicalAr1, i: usize, current: f64, rng: &mut R) -> f64 {
    let eps: f64 = rng.sample(StandardNormal);
    draw.mu[i] + draw.phi[i] * (current - draw.mu[i]) + draw.sigma[i] * eps
}
