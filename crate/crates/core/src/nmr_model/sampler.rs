//! Gibbs-within-Metropolis sampler. The mean layer (`μ_i`, `μ0`, `τ²`) is
//! conjugate and drawn exactly; persistence and scale parameters use
//! random-walk Metropolis on unconstrained scales, with step sizes adapted
//! during burn-in only.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use super::diagnostics::split_rhat;
use super::{AcceptanceRates, ChainDiagnostics, HierarchicalAr1, McmcConfig, PosteriorSample, Priors};
use crate::error::{Error, Result};
use crate::panel::RatePanel;
use crate::rng::{stream, StreamKey};

const MIN_PERIODS: usize = 3;
const TARGET_ACCEPTANCE: f64 = 0.44;
const ADAPT_EVERY: usize = 50;
const RHAT_WARNING: f64 = 1.2;

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn inv_gamma<R: Rng>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).expect("positive gamma parameters");
    1.0 / g.sample(rng)
}

fn ln_beta_density(x: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))
}

/// Log density of a half-normal with scale `s`, truncated to `[floor, ∞)`.
fn ln_truncated_half_normal(x: f64, s: f64, floor: f64) -> f64 {
    if x < floor {
        return f64::NEG_INFINITY;
    }
    -s.ln() - x * x / (2.0 * s * s) - erfc(floor / (s * std::f64::consts::SQRT_2)).ln()
}

struct Series {
    values: Vec<f64>,
}

impl Series {
    /// Exact AR(1) log likelihood: the first value is drawn from the
    /// stationary distribution `N(μ, σ² / (1 − φ²))`.
    fn ar_log_likelihood(&self, mu: f64, phi: f64, sigma: f64) -> f64 {
        let stationary = 1.0 - phi * phi;
        let d0 = self.values[0] - mu;
        let mut ss = stationary * d0 * d0;
        for w in self.values.windows(2) {
            let r = w[1] - mu - phi * (w[0] - mu);
            ss += r * r;
        }
        -(self.values.len() as f64) * sigma.ln() + 0.5 * stationary.ln() - ss / (2.0 * sigma * sigma)
    }
}

#[derive(Clone)]
struct State {
    mu: Vec<f64>,
    phi: Vec<f64>,
    sigma: Vec<f64>,
    mu0: f64,
    tau2: f64,
    phi_mean: f64,
    sigma_scale: f64,
}

impl State {
    fn snapshot(&self) -> HierarchicalAr1 {
        HierarchicalAr1 {
            mu: self.mu.clone(),
            phi: self.phi.clone(),
            sigma: self.sigma.clone(),
            mu0: self.mu0,
            tau: self.tau2.sqrt(),
            phi_mean: self.phi_mean,
            sigma_scale: self.sigma_scale,
        }
    }
}

/// Random-walk step sizes with acceptance counters.
struct Steps {
    phi: Vec<f64>,
    sigma: Vec<f64>,
    phi_mean: f64,
    sigma_scale: f64,
    accepted_phi: Vec<usize>,
    accepted_sigma: Vec<usize>,
    accepted_phi_mean: usize,
    accepted_sigma_scale: usize,
    proposals: usize,
}

impl Steps {
    fn new(n: usize) -> Self {
        Self {
            phi: vec![1.0; n],
            sigma: vec![0.3; n],
            phi_mean: 0.5,
            sigma_scale: 0.3,
            accepted_phi: vec![0; n],
            accepted_sigma: vec![0; n],
            accepted_phi_mean: 0,
            accepted_sigma_scale: 0,
            proposals: 0,
        }
    }

    fn reset_counts(&mut self) {
        self.accepted_phi.iter_mut().for_each(|c| *c = 0);
        self.accepted_sigma.iter_mut().for_each(|c| *c = 0);
        self.accepted_phi_mean = 0;
        self.accepted_sigma_scale = 0;
        self.proposals = 0;
    }

    fn adapt(&mut self) {
        let n = self.proposals as f64;
        let tune = |step: &mut f64, accepted: usize| {
            let rate = accepted as f64 / n;
            *step *= ((rate - TARGET_ACCEPTANCE) * 2.0).exp();
            *step = step.clamp(1e-4, 50.0);
        };
        for (step, &acc) in self.phi.iter_mut().zip(&self.accepted_phi) {
            tune(step, acc);
        }
        for (step, &acc) in self.sigma.iter_mut().zip(&self.accepted_sigma) {
            tune(step, acc);
        }
        tune(&mut self.phi_mean, self.accepted_phi_mean);
        tune(&mut self.sigma_scale, self.accepted_sigma_scale);
        self.reset_counts();
    }

    fn rates(&self) -> AcceptanceRates {
        let n = self.proposals.max(1) as f64;
        let k = self.phi.len().max(1) as f64;
        AcceptanceRates {
            phi: self.accepted_phi.iter().sum::<usize>() as f64 / (n * k),
            sigma: self.accepted_sigma.iter().sum::<usize>() as f64 / (n * k),
            phi_mean: self.accepted_phi_mean as f64 / n,
            sigma_scale: self.accepted_sigma_scale as f64 / n,
        }
    }
}

struct Chain<'a> {
    series: &'a [Series],
    priors: &'a Priors,
    state: State,
    steps: Steps,
    rng: ChaCha8Rng,
}

impl Chain<'_> {
    fn accept(&mut self, log_ratio: f64) -> bool {
        log_ratio >= 0.0 || self.rng.random::<f64>().ln() < log_ratio
    }

    fn update_mu(&mut self, i: usize) {
        let s = &self.state;
        let y = &self.series[i].values;
        let (phi, sigma2) = (s.phi[i], s.sigma[i] * s.sigma[i]);
        let z: f64 = y.windows(2).map(|w| w[1] - phi * w[0]).sum();
        let k = (y.len() - 1) as f64;
        let stationary = 1.0 - phi * phi;
        let precision = (k * (1.0 - phi).powi(2) + stationary) / sigma2 + 1.0 / s.tau2;
        let mean = (((1.0 - phi) * z + stationary * y[0]) / sigma2 + s.mu0 / s.tau2) / precision;
        self.state.mu[i] = mean + normal(&mut self.rng) / precision.sqrt();
    }

    fn phi_log_target(&self, i: usize, phi: f64) -> f64 {
        let s = &self.state;
        let kappa = self.priors.phi_concentration;
        self.series[i].ar_log_likelihood(s.mu[i], phi, s.sigma[i])
            + ln_beta_density(phi, s.phi_mean * kappa, (1.0 - s.phi_mean) * kappa)
            + phi.ln()
            + (-phi).ln_1p()
    }

    fn update_phi(&mut self, i: usize) {
        let current = self.state.phi[i];
        let proposal = expit(logit(current) + self.steps.phi[i] * normal(&mut self.rng));
        if !(proposal > 0.0 && proposal < 1.0) {
            return;
        }
        let ratio = self.phi_log_target(i, proposal) - self.phi_log_target(i, current);
        if self.accept(ratio) {
            self.state.phi[i] = proposal;
            self.steps.accepted_phi[i] += 1;
        }
    }

    fn sigma_log_target(&self, i: usize, sigma: f64) -> f64 {
        let s = &self.state;
        self.series[i].ar_log_likelihood(s.mu[i], s.phi[i], sigma)
            + ln_truncated_half_normal(sigma, s.sigma_scale, self.priors.sigma_floor)
            + sigma.ln()
    }

    fn update_sigma(&mut self, i: usize) {
        let current = self.state.sigma[i];
        let proposal = current * (self.steps.sigma[i] * normal(&mut self.rng)).exp();
        if proposal < self.priors.sigma_floor {
            return;
        }
        let ratio = self.sigma_log_target(i, proposal) - self.sigma_log_target(i, current);
        if self.accept(ratio) {
            self.state.sigma[i] = proposal;
            self.steps.accepted_sigma[i] += 1;
        }
    }

    fn update_mean_layer(&mut self) {
        let p = self.priors;
        let n = self.state.mu.len() as f64;
        let sum_mu: f64 = self.state.mu.iter().sum();
        let precision = n / self.state.tau2 + 1.0 / (p.mu0_sd * p.mu0_sd);
        let mean = (sum_mu / self.state.tau2 + p.mu0_mean / (p.mu0_sd * p.mu0_sd)) / precision;
        self.state.mu0 = mean + normal(&mut self.rng) / precision.sqrt();

        let mu0 = self.state.mu0;
        let ss: f64 = self.state.mu.iter().map(|m| (m - mu0).powi(2)).sum();
        self.state.tau2 = inv_gamma(&mut self.rng, p.tau2_shape + n / 2.0, p.tau2_scale + ss / 2.0);
    }

    fn phi_mean_log_target(&self, m: f64) -> f64 {
        let p = self.priors;
        let kappa = p.phi_concentration;
        self.state
            .phi
            .iter()
            .map(|&phi| ln_beta_density(phi, m * kappa, (1.0 - m) * kappa))
            .sum::<f64>()
            + ln_beta_density(m, p.phi_mean_alpha, p.phi_mean_beta)
            + m.ln()
            + (-m).ln_1p()
    }

    fn update_phi_mean(&mut self) {
        let current = self.state.phi_mean;
        let proposal = expit(logit(current) + self.steps.phi_mean * normal(&mut self.rng));
        if !(proposal > 0.0 && proposal < 1.0) {
            return;
        }
        let ratio = self.phi_mean_log_target(proposal) - self.phi_mean_log_target(current);
        if self.accept(ratio) {
            self.state.phi_mean = proposal;
            self.steps.accepted_phi_mean += 1;
        }
    }

    fn sigma_scale_log_target(&self, s: f64) -> f64 {
        let p = self.priors;
        let s2 = s * s;
        // s² ~ InvGamma(a, b), mapped to log s (Jacobian 2s · s)
        let prior = -(p.sigma_scale2_shape + 1.0) * s2.ln() - p.sigma_scale2_scale / s2 + 2.0 * s.ln();
        self.state
            .sigma
            .iter()
            .map(|&x| ln_truncated_half_normal(x, s, p.sigma_floor))
            .sum::<f64>()
            + prior
    }

    fn update_sigma_scale(&mut self) {
        let current = self.state.sigma_scale;
        let proposal = current * (self.steps.sigma_scale * normal(&mut self.rng)).exp();
        let ratio = self.sigma_scale_log_target(proposal) - self.sigma_scale_log_target(current);
        if ratio.is_finite() && self.accept(ratio) {
            self.state.sigma_scale = proposal;
            self.steps.accepted_sigma_scale += 1;
        }
    }

    fn sweep(&mut self) {
        for i in 0..self.series.len() {
            self.update_mu(i);
            self.update_phi(i);
            self.update_sigma(i);
        }
        self.update_mean_layer();
        self.update_phi_mean();
        self.update_sigma_scale();
        self.steps.proposals += 1;
    }
}

fn initial_state(series: &[Series], priors: &Priors, rng: &mut ChaCha8Rng) -> State {
    let mut mu = Vec::with_capacity(series.len());
    let mut sigma = Vec::with_capacity(series.len());
    for s in series {
        let n = s.values.len() as f64;
        let mean = s.values.iter().sum::<f64>() / n;
        let sd = (s.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        mu.push(mean + 0.5 * sd * normal(rng));
        sigma.push((sd.max(priors.sigma_floor * 2.0)) * (0.7 + 0.6 * rng.random::<f64>()));
    }
    let phi: Vec<f64> = (0..series.len()).map(|_| 0.2 + 0.6 * rng.random::<f64>()).collect();
    let mu0 = mu.iter().sum::<f64>() / mu.len() as f64;
    let tau2 = (mu.iter().map(|m| (m - mu0).powi(2)).sum::<f64>() / mu.len() as f64).max(0.01);
    let sigma_scale = sigma.iter().sum::<f64>() / sigma.len() as f64;
    State {
        mu,
        phi,
        sigma,
        mu0,
        tau2,
        phi_mean: 0.3 + 0.4 * rng.random::<f64>(),
        sigma_scale,
    }
}

struct ChainOutput {
    draws: Vec<HierarchicalAr1>,
    acceptance: AcceptanceRates,
}

fn run_chain(series: &[Series], config: &McmcConfig, chain: usize) -> ChainOutput {
    let mut rng = stream(config.seed, StreamKey::mcmc_chain(chain));
    let state = initial_state(series, &config.priors, &mut rng);
    let mut c = Chain {
        series,
        priors: &config.priors,
        state,
        steps: Steps::new(series.len()),
        rng,
    };
    for it in 1..=config.burn_in {
        c.sweep();
        if it % ADAPT_EVERY == 0 {
            c.steps.adapt();
        }
    }
    c.steps.reset_counts();
    let thin = config.thin.max(1);
    let mut draws = Vec::with_capacity(config.iterations / thin);
    for it in 0..config.iterations {
        c.sweep();
        if it % thin == 0 {
            draws.push(c.state.snapshot());
        }
    }
    ChainOutput {
        draws,
        acceptance: c.steps.rates(),
    }
}

/// Sample the posterior of the hierarchical AR(1) fit to each country's
/// observed series. Every country needs at least three consecutive
/// observations; the longest trailing run without gaps is used.
///
/// Countries are processed in identifier order internally, so the result is
/// invariant to the order of the panel's rows.
pub fn fit_mcmc(panel: &RatePanel, config: &McmcConfig) -> Result<PosteriorSample> {
    if config.chains == 0 || config.iterations == 0 {
        return Err(Error::InvalidArgument("MCMC needs at least one chain and one iteration".into()));
    }
    let mut order: Vec<usize> = (0..panel.n_countries()).collect();
    order.sort_by(|&a, &b| panel.countries()[a].cmp(&panel.countries()[b]));

    let mut series = Vec::with_capacity(order.len());
    for &i in &order {
        let values = trailing_run(panel.series(i));
        if values.len() < MIN_PERIODS {
            return Err(Error::InsufficientHistory {
                country: panel.countries()[i].clone(),
                needed: MIN_PERIODS,
                have: values.len(),
            });
        }
        series.push(Series { values });
    }
    if series.is_empty() {
        return Err(Error::InvalidArgument("no countries to fit".into()));
    }

    let run = |c: usize| run_chain(&series, config, c);
    let outputs: Vec<ChainOutput> = if config.parallel_chains {
        (0..config.chains).into_par_iter().map(run).collect()
    } else {
        (0..config.chains).map(run).collect()
    };

    let diagnostics = diagnose(&outputs);
    // Map canonical order back to panel order.
    let mut position = vec![0; order.len()];
    for (canonical, &i) in order.iter().enumerate() {
        position[i] = canonical;
    }
    let reorder = |v: &[f64]| -> Vec<f64> { position.iter().map(|&k| v[k]).collect() };
    let draws = outputs
        .into_iter()
        .flat_map(|o| o.draws)
        .map(|d| HierarchicalAr1 {
            mu: reorder(&d.mu),
            phi: reorder(&d.phi),
            sigma: reorder(&d.sigma),
            ..d
        })
        .collect();

    Ok(PosteriorSample {
        countries: panel.countries().to_vec(),
        draws,
        seed: config.seed,
        diagnostics,
    })
}

fn trailing_run(values: &[Option<f64>]) -> Vec<f64> {
    let mut run: Vec<f64> = values
        .iter()
        .rev()
        .skip_while(|v| v.is_none())
        .map_while(|v| *v)
        .collect();
    run.reverse();
    run
}

fn diagnose(outputs: &[ChainOutput]) -> ChainDiagnostics {
    let n = outputs.len() as f64;
    let mut acceptance = AcceptanceRates::default();
    for o in outputs {
        acceptance.phi += o.acceptance.phi / n;
        acceptance.sigma += o.acceptance.sigma / n;
        acceptance.phi_mean += o.acceptance.phi_mean / n;
        acceptance.sigma_scale += o.acceptance.sigma_scale / n;
    }

    let trace = |f: &dyn Fn(&HierarchicalAr1) -> f64| -> Vec<Vec<f64>> {
        outputs.iter().map(|o| o.draws.iter().map(f).collect()).collect()
    };
    let mut rhat = Vec::new();
    for (k, name) in ["mu0", "tau", "phi_mean", "sigma_scale"].into_iter().enumerate() {
        let r = split_rhat(&trace(&|d: &HierarchicalAr1| d.hyperparameters()[k].1));
        rhat.push((name.to_string(), r));
    }
    let n_countries = outputs[0].draws.first().map_or(0, |d| d.mu.len());
    let max_rhat_mu = (0..n_countries)
        .map(|i| split_rhat(&trace(&|d: &HierarchicalAr1| d.mu[i])))
        .fold(0.0, f64::max);

    let mut warnings = Vec::new();
    for (name, r) in &rhat {
        if *r > RHAT_WARNING {
            warnings.push(format!("split-Rhat of {name} is {r:.3} (> {RHAT_WARNING})"));
        }
    }
    ChainDiagnostics {
        acceptance,
        rhat,
        max_rhat_mu,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_run_skips_gaps() {
        assert_eq!(trailing_run(&[Some(1.0), None, Some(2.0), Some(3.0), None]), vec![2.0, 3.0]);
        assert_eq!(trailing_run(&[None, None]), Vec::<f64>::new());
    }

    #[test]
    fn truncated_half_normal_normalizes() {
        // crude quadrature over [floor, 12 s]
        let (s, floor) = (1.3, 0.4);
        let h = 1e-4;
        let mut total = 0.0;
        let mut x = floor + h / 2.0;
        while x < 12.0 * s {
            total += ln_truncated_half_normal(x, s, floor).exp() * h;
            x += h;
        }
        // the density drops the constant sqrt(2/π)
        let total = total * (2.0 / std::f64::consts::PI).sqrt();
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }
}
