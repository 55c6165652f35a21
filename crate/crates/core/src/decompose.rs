//! Random-intercept model relating in-migration to positive net migration,
//!
//! ```text
//! IMR_{i,t} = β0_i + β1 · max(NMR_{i,t}, 0) + ε_{i,t}
//! β0_i ~ N(β0, σ²_between),  ε ~ N(0, σ²_within)
//! ```
//!
//! fit by restricted maximum likelihood. The likelihood is profiled over the
//! variance ratio `λ = σ²_between / σ²_within`, which is then optimized in
//! one dimension on the log scale. Country intercepts are BLUPs.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::panel::{RateKind, RatePanel};

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Convergence tolerance on `ln λ`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-14,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub r2_imr: f64,
    pub r2_omr: f64,
    pub n_observations: usize,
    pub iterations: usize,
    /// The variance ratio sits on the edge of its search range (0 or +∞).
    pub at_boundary: bool,
    /// `(country, period start, observed IMR − fitted IMR)`
    pub residuals: Vec<(String, i32, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedEffectsFit {
    /// `β0`, global mean intercept (rate units).
    pub intercept: f64,
    /// `β1`, dimensionless slope on `max(NMR, 0)`.
    pub slope: f64,
    pub countries: Vec<String>,
    /// `β0_i`, aligned with `countries`.
    pub country_intercepts: Vec<f64>,
    pub sigma2_between: f64,
    pub sigma2_within: f64,
    /// Slope was unidentifiable and fixed at zero.
    pub slope_fixed: bool,
    pub diagnostics: FitDiagnostics,
    pub warnings: Vec<String>,
}

impl MixedEffectsFit {
    /// Intercept of a fitted country, or the global mean for others.
    pub fn intercept_for(&self, country: &str) -> f64 {
        self.countries
            .iter()
            .position(|c| c == country)
            .map_or(self.intercept, |k| self.country_intercepts[k])
    }

    /// `β0_i + β1 · max(nmr, 0)`, clamped at zero.
    pub fn predict_imr(&self, country: &str, nmr: f64) -> f64 {
        predict_imr(self.intercept_for(country), self.slope, nmr)
    }

    /// Split a net rate into `(imr, omr)` with the nonnegativity repair.
    pub fn decompose(&self, country: &str, nmr: f64) -> (f64, f64) {
        split_rate(self.intercept_for(country), self.slope, nmr)
    }
}

pub fn predict_imr(country_intercept: f64, slope: f64, nmr: f64) -> f64 {
    (country_intercept + slope * nmr.max(0.0)).max(0.0)
}

/// `(imr, omr)` with `omr = imr − nmr`. When the predicted in-migration rate
/// is below the positive part of the net rate, out-migration would be
/// negative; the repair sets `omr = 0` and `imr = nmr`, keeping the identity.
pub fn split_rate(country_intercept: f64, slope: f64, nmr: f64) -> (f64, f64) {
    let imr = predict_imr(country_intercept, slope, nmr);
    repair(imr, nmr)
}

/// Enforce `imr ≥ 0`, `omr ≥ 0` and `imr − omr = nmr` given a predicted imr.
pub fn repair(imr: f64, nmr: f64) -> (f64, f64) {
    let imr = imr.max(0.0);
    if imr < nmr {
        (nmr, 0.0)
    } else {
        (imr, imr - nmr)
    }
}

/// Apply a fit to a net-rate panel.
pub fn decompose_nmr(fit: &MixedEffectsFit, nmr: &RatePanel) -> (RatePanel, RatePanel) {
    let countries = nmr.countries().to_vec();
    let periods = nmr.periods().clone();
    let mut imr = RatePanel::empty(RateKind::Imr, countries.clone(), periods.clone());
    let mut omr = RatePanel::empty(RateKind::Omr, countries, periods);
    for (i, t, n) in nmr.observed() {
        let (inr, out) = fit.decompose(&nmr.countries()[i], n);
        imr.set(i, t, Some(inr));
        omr.set(i, t, Some(out));
    }
    (imr, omr)
}

struct Observation {
    group: usize,
    x: f64,
    y: f64,
}

struct Design {
    obs: Vec<Observation>,
    group_sizes: Vec<usize>,
    with_slope: bool,
}

struct ProfileAt {
    objective: f64,
    /// Derivative of the objective with respect to `ln λ`.
    score: f64,
    beta: [f64; 2],
    sigma2: f64,
    /// Per-group mean residual around the fixed part.
    group_mean_residual: Vec<f64>,
}

impl Design {
    fn p(&self) -> usize {
        if self.with_slope {
            2
        } else {
            1
        }
    }

    /// Profiled −2 log restricted likelihood (up to a constant) at `λ`.
    fn profile(&self, lambda: f64) -> Option<ProfileAt> {
        let g = self.group_sizes.len();
        let mut n_x = vec![0.0; g];
        let mut sum_x = vec![0.0; g];
        let mut sum_y = vec![0.0; g];
        for o in &self.obs {
            sum_x[o.group] += o.x;
            sum_y[o.group] += o.y;
        }
        for (k, &n) in self.group_sizes.iter().enumerate() {
            n_x[k] = n as f64;
        }
        // Within-group centered cross products.
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for o in &self.obs {
            let n = n_x[o.group];
            let dx = o.x - sum_x[o.group] / n;
            let dy = o.y - sum_y[o.group] / n;
            sxx += dx * dx;
            sxy += dx * dy;
        }
        // X'H⁻¹X = W + Σ_g s_g s_g' / (n_g (1 + n_g λ)), s_g = (n_g, Σx_g)
        let mut a11 = 0.0;
        let mut a12 = 0.0;
        let mut a22 = sxx;
        let mut b1 = 0.0;
        let mut b2 = sxy;
        let mut log_det_h = 0.0;
        for k in 0..g {
            let n = n_x[k];
            let d = 1.0 / (n * (1.0 + n * lambda));
            a11 += n * n * d;
            a12 += n * sum_x[k] * d;
            a22 += sum_x[k] * sum_x[k] * d;
            b1 += n * sum_y[k] * d;
            b2 += sum_x[k] * sum_y[k] * d;
            log_det_h += (n * lambda).ln_1p();
        }
        let (beta, log_det_x) = if self.with_slope {
            let det = a11 * a22 - a12 * a12;
            if !(det > 0.0) {
                return None;
            }
            (
                [(a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det],
                det.ln(),
            )
        } else {
            ([b1 / a11, 0.0], a11.ln())
        };

        let mut mean_r = vec![0.0; g];
        for o in &self.obs {
            mean_r[o.group] += o.y - beta[0] - beta[1] * o.x;
        }
        for k in 0..g {
            mean_r[k] /= n_x[k];
        }
        let mut quad = 0.0;
        for o in &self.obs {
            let r = o.y - beta[0] - beta[1] * o.x - mean_r[o.group];
            quad += r * r;
        }
        for k in 0..g {
            let n = n_x[k];
            quad += (n * mean_r[k]).powi(2) / (n * (1.0 + n * lambda));
        }
        let dof = (self.obs.len() - self.p()) as f64;
        let sigma2 = (quad / dof).max(f64::MIN_POSITIVE);
        let objective = log_det_h + log_det_x + dof * sigma2.ln();

        // d/dλ = tr(P Z Z') − dof · y'P Z Z' P y / y'P y, with the group
        // structure: 1'H⁻¹1 = n/(1+nλ), 1'H⁻¹X = s'/(1+nλ), 1'H⁻¹r = n r̄/(1+nλ).
        let mut trace = 0.0;
        let mut pzzp = 0.0;
        for k in 0..g {
            let n = n_x[k];
            let c = 1.0 + n * lambda;
            let s_ainv_s = if self.with_slope {
                let det = a11 * a22 - a12 * a12;
                (a22 * n * n - 2.0 * a12 * n * sum_x[k] + a11 * sum_x[k] * sum_x[k]) / det
            } else {
                n * n / a11
            };
            trace += n / c - s_ainv_s / (c * c);
            pzzp += (n * mean_r[k] / c).powi(2);
        }
        let score = lambda * (trace - dof * pzzp / quad.max(f64::MIN_POSITIVE));
        objective.is_finite().then_some(ProfileAt {
            objective,
            score,
            beta,
            sigma2,
            group_mean_residual: mean_r,
        })
    }
}

const LOG_LAMBDA_MIN: f64 = -25.0;
const LOG_LAMBDA_MAX: f64 = 35.0;
const GRID_STEP: f64 = 0.5;

/// Returns `(λ, iterations, at_boundary)`.
fn optimize_lambda(design: &Design, options: &FitOptions) -> Result<(f64, usize, bool)> {
    let eval = |theta: f64| design.profile(theta.exp()).map(|p| p.objective);
    let n_grid = ((LOG_LAMBDA_MAX - LOG_LAMBDA_MIN) / GRID_STEP) as usize + 1;
    let grid: Vec<f64> = (0..n_grid).map(|k| LOG_LAMBDA_MIN + GRID_STEP * k as f64).collect();
    let values: Vec<Option<f64>> = grid.iter().map(|&th| eval(th)).collect();
    let zero = design.profile(0.0).map(|p| p.objective);

    let best = values
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let Some((k_best, v_best)) = best else {
        return Err(Error::NonConvergence { iterations: n_grid });
    };
    if let Some(z) = zero {
        if z <= v_best {
            return Ok((0.0, n_grid, true));
        }
    }
    if k_best == 0 {
        return Ok((0.0, n_grid, true));
    }
    if k_best + 1 == n_grid {
        return Ok((grid[k_best].exp(), n_grid, true));
    }

    // Bisection on the score inside the bracketing grid cells. The score is
    // well conditioned at the optimum where the objective is flat, so this
    // runs to float resolution.
    let score = |theta: f64| design.profile(theta.exp()).map(|p| p.score);
    let (mut lo, mut hi) = (grid[k_best - 1], grid[k_best + 1]);
    if let (Some(s_lo), Some(s_hi)) = (score(lo), score(hi)) {
        if s_lo < 0.0 && s_hi > 0.0 {
            let mut iterations = n_grid;
            loop {
                let mid = 0.5 * (lo + hi);
                if hi - lo <= options.tolerance || mid <= lo || mid >= hi {
                    break;
                }
                if iterations >= n_grid + options.max_iterations {
                    return Err(Error::NonConvergence { iterations });
                }
                iterations += 1;
                match score(mid) {
                    Some(s) if s > 0.0 => hi = mid,
                    Some(_) => lo = mid,
                    None => return Err(Error::NonConvergence { iterations }),
                }
            }
            return Ok(((0.5 * (lo + hi)).exp(), iterations, false));
        }
    }

    // Golden-section fallback when the score does not bracket a root.
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (grid[k_best - 1], grid[k_best + 1]);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = eval(c).unwrap_or(f64::INFINITY);
    let mut fd = eval(d).unwrap_or(f64::INFINITY);
    let mut iterations = n_grid;
    while hi - lo > options.tolerance {
        if iterations >= n_grid + options.max_iterations {
            return Err(Error::NonConvergence { iterations });
        }
        iterations += 1;
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = eval(c).unwrap_or(f64::INFINITY);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = eval(d).unwrap_or(f64::INFINITY);
        }
    }
    Ok((((lo + hi) / 2.0).exp(), iterations, false))
}

/// Fit the random-intercept model on cells where both IMR and NMR are
/// observed. Countries with fewer than two paired periods are left out of
/// the fit and later fall back to the global intercept.
pub fn fit_mixed_effects(imr: &RatePanel, nmr: &RatePanel, options: &FitOptions) -> Result<MixedEffectsFit> {
    let nmr_index: HashMap<&str, usize> = nmr
        .countries()
        .iter()
        .enumerate()
        .map(|(k, c)| (c.as_str(), k))
        .collect();

    let mut warnings = Vec::new();
    let mut countries = Vec::new();
    let mut pairs: Vec<Vec<(i32, f64, f64)>> = Vec::new();
    for (i, id) in imr.countries().iter().enumerate() {
        let Some(&j) = nmr_index.get(id.as_str()) else {
            continue;
        };
        let mut rows = Vec::new();
        for t in 0..imr.periods().len() {
            let year = imr.periods().year(t);
            let Some(tn) = nmr.periods().index_of(year) else {
                continue;
            };
            if let (Some(y), Some(n)) = (imr.get(i, t), nmr.get(j, tn)) {
                rows.push((year, n, y));
            }
        }
        if rows.len() >= 2 {
            countries.push(id.clone());
            pairs.push(rows);
        } else if !rows.is_empty() {
            warnings.push(format!("{id}: only {} paired period, not fitted", rows.len()));
        }
    }
    if countries.is_empty() {
        return Err(Error::InsufficientHistory {
            country: "all".into(),
            needed: 2,
            have: 0,
        });
    }

    let mut obs = Vec::new();
    for (g, rows) in pairs.iter().enumerate() {
        for &(_, n, y) in rows {
            obs.push(Observation {
                group: g,
                x: n.max(0.0),
                y,
            });
        }
    }
    let with_slope = obs.iter().any(|o| o.x != obs[0].x);
    let mut slope_fixed = false;
    if !with_slope {
        slope_fixed = true;
        warnings.push("max(NMR, 0) is constant across all observations; slope fixed at 0".into());
    }
    let design = Design {
        group_sizes: pairs.iter().map(Vec::len).collect(),
        obs,
        with_slope,
    };
    if design.obs.len() <= design.p() {
        return Err(Error::InsufficientHistory {
            country: "all".into(),
            needed: design.p() + 1,
            have: design.obs.len(),
        });
    }

    let (lambda, iterations, at_boundary) = optimize_lambda(&design, options)?;
    let at = design
        .profile(lambda)
        .ok_or(Error::NonConvergence { iterations })?;

    let intercept = at.beta[0];
    let slope = at.beta[1];
    let country_intercepts: Vec<f64> = design
        .group_sizes
        .iter()
        .zip(&at.group_mean_residual)
        .map(|(&n, &r)| {
            let n = n as f64;
            let shrink = if lambda.is_finite() { n * lambda / (1.0 + n * lambda) } else { 1.0 };
            intercept + shrink * r
        })
        .collect();

    let mut fit = MixedEffectsFit {
        intercept,
        slope,
        countries,
        country_intercepts,
        sigma2_between: lambda * at.sigma2,
        sigma2_within: at.sigma2,
        slope_fixed,
        diagnostics: FitDiagnostics {
            r2_imr: f64::NAN,
            r2_omr: f64::NAN,
            n_observations: design.obs.len(),
            iterations,
            at_boundary,
            residuals: Vec::new(),
        },
        warnings,
    };

    let mut imr_obs = Vec::new();
    let mut imr_fit = Vec::new();
    let mut omr_obs = Vec::new();
    let mut omr_fit = Vec::new();
    let mut residuals = Vec::new();
    for (g, rows) in pairs.iter().enumerate() {
        let id = fit.countries[g].clone();
        for &(year, n, y) in rows {
            let (fi, fo) = fit.decompose(&id, n);
            imr_obs.push(y);
            imr_fit.push(fi);
            omr_obs.push(y - n);
            omr_fit.push(fo);
            residuals.push((id.clone(), year, y - fit.predict_imr(&id, n)));
        }
    }
    fit.diagnostics.r2_imr = r_squared(&imr_obs, &imr_fit);
    fit.diagnostics.r2_omr = r_squared(&omr_obs, &omr_fit);
    fit.diagnostics.residuals = residuals;
    Ok(fit)
}

/// `1 − SS_res / SS_tot`.
pub fn r_squared(observed: &[f64], fitted: &[f64]) -> f64 {
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let ss_tot: f64 = observed.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = observed.iter().zip(fitted).map(|(y, f)| (y - f).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

/// Pearson correlation.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}
