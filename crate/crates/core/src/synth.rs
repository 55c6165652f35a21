//! Synthetic worlds with known ground truth.
//!
//! Countries follow the hierarchical AR(1) model on the standardized scale.
//! Standardized net rates are split into gross rates with the
//! random-intercept model, out-migration is applied as age-specific rates
//! `G · R_a` and in-migration follows the migration schedule, so every
//! estimator in the crate can be scored against the generating values.

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal, StandardNormal};

use crate::country::{CountryMeta, GCC, GCC_LABOR_ORIGIN};
use crate::decompose::repair;
use crate::error::{Error, Result};
use crate::grid::{AgeGrid, PeriodAxis, PopulationGrid};
use crate::masi::masi;
use crate::nmr_model::{draw_next_rate, HierarchicalAr1};
use crate::panel::{RateKind, RatePanel};
use crate::project::{project_no_migration, VitalRates};
use crate::rng::{stream, StreamKey};
use crate::schedule::AgeSchedule;
use crate::world::{AgeFlows, World};
use crate::PERIOD_YEARS;

/// World-level parameters of the AR(1) hierarchy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1Hierarchy {
    pub mu0: f64,
    pub tau: f64,
    pub phi_mean: f64,
    pub phi_concentration: f64,
    pub sigma_scale: f64,
    pub sigma_floor: f64,
}

impl Default for Ar1Hierarchy {
    fn default() -> Self {
        Self {
            mu0: 0.0,
            tau: 3.0,
            phi_mean: 0.6,
            phi_concentration: 4.0,
            sigma_scale: 2.0,
            sigma_floor: 0.01,
        }
    }
}

impl Ar1Hierarchy {
    /// Draw country parameters.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<HierarchicalAr1> {
        let beta = Beta::new(
            self.phi_mean * self.phi_concentration,
            (1.0 - self.phi_mean) * self.phi_concentration,
        )
        .map_err(|e| Error::InvalidArgument(format!("persistence distribution: {e}")))?;
        let mut out = HierarchicalAr1 {
            mu: Vec::with_capacity(n),
            phi: Vec::with_capacity(n),
            sigma: Vec::with_capacity(n),
            mu0: self.mu0,
            tau: self.tau,
            phi_mean: self.phi_mean,
            sigma_scale: self.sigma_scale,
        };
        for _ in 0..n {
            out.mu.push(self.mu0 + self.tau * rng.sample::<f64, _>(StandardNormal));
            // Keep φ off the unit-interval edges where the stationary start
            // degenerates.
            out.phi.push(beta.sample(rng).clamp(1e-6, 1.0 - 1e-6));
            let mut s;
            loop {
                s = (self.sigma_scale * rng.sample::<f64, _>(StandardNormal)).abs();
                if s >= self.sigma_floor {
                    break;
                }
            }
            out.sigma.push(s);
        }
        Ok(out)
    }
}

/// Simulate AR(1) series from a stationary start.
pub fn simulate_ar1<R: Rng + ?Sized>(params: &HierarchicalAr1, i: usize, n_periods: usize, rng: &mut R) -> Vec<f64> {
    let (mu, phi, sigma) = (params.mu[i], params.phi[i], params.sigma[i]);
    let mut y = mu + sigma / (1.0 - phi * phi).sqrt() * rng.sample::<f64, _>(StandardNormal);
    let mut out = Vec::with_capacity(n_periods);
    for _ in 0..n_periods {
        out.push(y);
        y = mu + phi * (y - mu) + sigma * rng.sample::<f64, _>(StandardNormal);
    }
    out
}

/// A panel of standardized net rates drawn from the hierarchy, with the
/// parameters that generated it.
pub fn ar1_panel(
    n_countries: usize,
    periods: PeriodAxis,
    hierarchy: &Ar1Hierarchy,
    seed: u64,
) -> Result<(RatePanel, HierarchicalAr1)> {
    let mut rng = stream(seed, StreamKey::synthetic("ar1", 0, 0));
    let params = hierarchy.draw(n_countries, &mut rng)?;
    let ids = synthetic_ids(n_countries, false);
    let mut panel = RatePanel::empty(RateKind::NmrStar, ids, periods.clone());
    for i in 0..n_countries {
        for (t, y) in simulate_ar1(&params, i, periods.len(), &mut rng).into_iter().enumerate() {
            panel.set(i, t, Some(y));
        }
    }
    Ok((panel, params))
}

/// Parameters of the random-intercept relation between gross in-migration
/// and positive net migration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eq1Params {
    pub intercept: f64,
    pub slope: f64,
    pub sd_between: f64,
    pub sd_within: f64,
}

impl Default for Eq1Params {
    fn default() -> Self {
        Self {
            intercept: 6.0,
            slope: 0.9,
            sd_between: 3.0,
            sd_within: 0.5,
        }
    }
}

/// In-migration rates generated from net rates:
/// `IMR = β0_i + β1 · max(NMR, 0) + ε`, clamped at zero. Returns the panel
/// and the country intercepts.
pub fn eq1_panel(nmr: &RatePanel, params: &Eq1Params, seed: u64) -> Result<(RatePanel, Vec<f64>)> {
    let mut rng = stream(seed, StreamKey::synthetic("eq1", 0, 0));
    let intercepts: Vec<f64> = (0..nmr.n_countries())
        .map(|_| params.intercept + params.sd_between * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut imr = RatePanel::empty(RateKind::Imr, nmr.countries().to_vec(), nmr.periods().clone());
    for (i, t, n) in nmr.observed() {
        let e: f64 = rng.sample(StandardNormal);
        imr.set(i, t, Some((intercepts[i] + params.slope * n.max(0.0) + params.sd_within * e).max(0.0)));
    }
    Ok((imr, intercepts))
}

/// Net rates drawn independently from `N(mean, sd²)`.
pub fn normal_panel(n_countries: usize, periods: PeriodAxis, mean: f64, sd: f64, seed: u64) -> Result<RatePanel> {
    let normal = Normal::new(mean, sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = stream(seed, StreamKey::synthetic("normal", 0, 0));
    let mut panel = RatePanel::empty(RateKind::Nmr, synthetic_ids(n_countries, false), periods.clone());
    for i in 0..n_countries {
        for t in 0..periods.len() {
            panel.set(i, t, Some(normal.sample(&mut rng)));
        }
    }
    Ok(panel)
}

/// Three-letter identifiers starting with `Z`, optionally preceded by the
/// GCC states and their labor-origin countries.
pub fn synthetic_ids(n: usize, with_gcc: bool) -> Vec<String> {
    let mut ids: Vec<String> = Vec::with_capacity(n);
    if with_gcc {
        ids.extend(GCC.iter().chain(GCC_LABOR_ORIGIN.iter()).take(n).map(|s| s.to_string()));
    }
    let mut k = 0;
    while ids.len() < n {
        let a = (b'A' + (k / 26) as u8) as char;
        let b = (b'A' + (k % 26) as u8) as char;
        ids.push(format!("Z{a}{b}"));
        k += 1;
    }
    ids
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    RogersCastro,
    Flat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_countries: usize,
    pub first_year: i32,
    /// Historic periods; snapshots run one step past the last.
    pub n_periods: usize,
    /// Extra periods of vital rates for forecasting.
    pub forecast_periods: usize,
    /// Gross in-migration is observed from this period onward.
    pub flow_start_year: i32,
    pub n_age_groups: usize,
    pub seed: u64,
    /// With `false` nobody migrates.
    pub migration: bool,
    pub ar1: Ar1Hierarchy,
    pub decomposition: Eq1Params,
    pub schedule: ScheduleKind,
    /// Same age structure, vital rates and fertility for every country.
    pub identical_pyramids: bool,
    /// Amplitude of cohort-size waves in the initial pyramids.
    pub pyramid_waves: f64,
    /// Log-scale standard deviation of period-to-period fertility shocks.
    pub fertility_volatility: f64,
    pub tfr_range: (f64, f64),
    pub population_range: (f64, f64),
    /// Trailing countries of 5,000 persons, below the inclusion threshold.
    pub n_small: usize,
    pub with_gcc: bool,
    /// Emit age- and sex-specific flows for the observed-flow periods.
    pub age_flows: bool,
    /// Redistribute the world's out-migrants as in-migrants, so global net
    /// migration is zero in every age and sex cell.
    pub closed: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_countries: 20,
            first_year: 1950,
            n_periods: 14,
            forecast_periods: 16,
            flow_start_year: 1990,
            n_age_groups: 21,
            seed: 1,
            migration: true,
            ar1: Ar1Hierarchy::default(),
            decomposition: Eq1Params::default(),
            schedule: ScheduleKind::RogersCastro,
            identical_pyramids: false,
            pyramid_waves: 0.2,
            fertility_volatility: 0.1,
            tfr_range: (1.6, 4.5),
            population_range: (1e6, 5e7),
            n_small: 0,
            with_gcc: false,
            age_flows: false,
            closed: true,
        }
    }
}

/// Generating values behind a synthetic world. Standardized rates use each
/// country's first period as the reference age structure and are the
/// realized ones: in a closed world the AR(1) state continues from the rate
/// left after redistribution, as in the forecast loop.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    pub params: HierarchicalAr1,
    pub country_intercepts: Vec<f64>,
    pub nmr_star: RatePanel,
    pub imr_star: RatePanel,
    pub omr_star: RatePanel,
    /// Gross in-migration of every period, including unobserved ones.
    pub imr: RatePanel,
    /// `C_{i,t}`, `i`-major.
    pub country_masi: Vec<f64>,
    pub global_masi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWorld {
    pub world: World,
    pub truth: SynthTruth,
}

fn survival_at(age: f64) -> f64 {
    let hazard = 0.0004 * (0.085 * (age - 30.0)).exp() + 0.0008;
    (-PERIOD_YEARS * hazard).exp()
}

const FERTILITY_SHAPE: [f64; 7] = [0.08, 0.24, 0.28, 0.2, 0.12, 0.06, 0.02];

pub fn synth_world(spec: &SynthSpec) -> Result<SynthWorld> {
    if spec.n_countries == 0 || spec.n_periods < 2 {
        return Err(Error::InvalidArgument("need at least one country and two periods".into()));
    }
    let ages = AgeGrid::new(spec.n_age_groups)?;
    let n_a = ages.len();
    let n = spec.n_countries;
    let ids = synthetic_ids(n, spec.with_gcc);
    let countries: Vec<CountryMeta> = ids.iter().map(|id| CountryMeta::new(id.clone(), "synthetic")).collect();
    let schedule = match spec.schedule {
        ScheduleKind::RogersCastro => AgeSchedule::default_for(ages),
        ScheduleKind::Flat => AgeSchedule::flat(ages),
    };
    let vital_periods = PeriodAxis::uniform(spec.first_year, spec.n_periods + spec.forecast_periods);
    let periods = PeriodAxis::uniform(spec.first_year, spec.n_periods);
    let snapshots = PeriodAxis::uniform(spec.first_year, spec.n_periods + 1);
    let mut rng = stream(spec.seed, StreamKey::synthetic("world", 0, 0));

    // Vital rates.
    let mut vitals = VitalRates::constant(ids.clone(), vital_periods.clone(), ages, 1.0, 0.0, 1.05)?;
    let fertile: Vec<usize> = ages.groups_within(15, 50).collect();
    let tfr_base: Vec<f64> = (0..n)
        .map(|_| spec.tfr_range.0 + (spec.tfr_range.1 - spec.tfr_range.0) * rng.random::<f64>())
        .collect();
    let shocks: Vec<f64> = (0..n * vital_periods.len())
        .map(|_| (spec.fertility_volatility * rng.sample::<f64, _>(StandardNormal)).exp())
        .collect();
    for i in 0..n {
        let src = if spec.identical_pyramids { 0 } else { i };
        for t in 0..vital_periods.len() {
            let (surv, fert, birth, _) = vitals.cell_mut(i, t);
            for a in 0..n_a {
                let s = survival_at(ages.lower(a) as f64 + 2.5);
                surv[2 * a] = s.powf(1.15);
                surv[2 * a + 1] = s;
            }
            birth[0] = 0.965;
            birth[1] = 0.97;
            let tfr = tfr_base[src] * shocks[src * vital_periods.len() + t];
            for (k, &a) in fertile.iter().enumerate() {
                fert[a] = tfr * FERTILITY_SHAPE.get(k).copied().unwrap_or(0.0) / PERIOD_YEARS;
            }
        }
    }

    // Initial pyramids.
    let mut population = PopulationGrid::zeros(ids.clone(), snapshots.clone(), ages);
    let shared_phase: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    for i in 0..n {
        let src = if spec.identical_pyramids { 0 } else { i };
        let phase = if spec.identical_pyramids {
            shared_phase
        } else {
            rng.random::<f64>() * std::f64::consts::TAU
        };
        let growth = 0.012 * (tfr_base[src] - 2.1);
        let small = i >= n.saturating_sub(spec.n_small);
        let total = if small {
            5_000.0
        } else {
            let (lo, hi) = spec.population_range;
            (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
        };
        let mut shape = Vec::with_capacity(n_a);
        let mut alive = 1.0;
        for a in 0..n_a {
            let x = ages.lower(a) as f64 + 2.5;
            let wave = 1.0 + spec.pyramid_waves * (std::f64::consts::TAU * x / 25.0 + phase).sin();
            shape.push(alive * (-growth * x).exp() * wave.max(0.05));
            alive *= survival_at(x);
        }
        let sum: f64 = shape.iter().sum();
        let cells = population.cells_mut(i, 0);
        for a in 0..n_a {
            cells[2 * a] = total * shape[a] / sum * 0.5;
            cells[2 * a + 1] = total * shape[a] / sum * 0.5;
        }
    }

    // Migration truth.
    let params = spec.ar1.draw(n, &mut rng)?;
    let intercepts: Vec<f64> = (0..n)
        .map(|_| (spec.decomposition.intercept + spec.decomposition.sd_between * rng.sample::<f64, _>(StandardNormal)).max(0.1))
        .collect();
    // Stationary start; later states continue from the realized rate.
    let mut state: Vec<f64> = (0..n)
        .map(|i| {
            let (mu, phi, sigma) = (params.mu[i], params.phi[i], params.sigma[i]);
            mu + sigma / (1.0 - phi * phi).sqrt() * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();

    let empty = |k| RatePanel::empty(k, ids.clone(), periods.clone());
    let (mut nmr, mut imr_obs, mut imr_all) = (empty(RateKind::Nmr), empty(RateKind::Imr), empty(RateKind::Imr));
    let (mut nmr_star, mut imr_star, mut omr_star) =
        (empty(RateKind::NmrStar), empty(RateKind::ImrStar), empty(RateKind::OmrStar));
    let mut country_masi = vec![0.0; n * periods.len()];
    let mut global_masi = vec![0.0; periods.len()];
    let mut inflow_grid = PopulationGrid::zeros(ids.clone(), periods.clone(), ages);
    let mut outflow_grid = PopulationGrid::zeros(ids.clone(), periods.clone(), ages);

    for (t, &year) in periods.years().iter().enumerate() {
        let at_risk: Vec<Vec<f64>> = (0..n)
            .map(|i| project_no_migration(population.cells(i, t), &vitals.view(&ids[i], year)?))
            .collect::<Result<_>>()?;
        let by_age = |cells: &[f64]| -> Vec<f64> { (0..n_a).map(|a| cells[2 * a] + cells[2 * a + 1]).collect() };
        let mut world_ages = vec![0.0; n_a];
        for i in 0..n {
            let b = by_age(&at_risk[i]);
            let tot: f64 = b.iter().sum();
            country_masi[i * periods.len() + t] = masi(&b.iter().map(|x| x / tot).collect::<Vec<_>>(), &schedule)?;
            for a in 0..n_a {
                world_ages[a] += b[a];
            }
        }
        let wt: f64 = world_ages.iter().sum();
        global_masi[t] = masi(&world_ages.iter().map(|x| x / wt).collect::<Vec<_>>(), &schedule)?;
        let global_ratio = global_masi[t] / global_masi[0];
        if t > 0 && spec.migration {
            for (i, y) in state.iter_mut().enumerate() {
                *y = draw_next_rate(&params, i, *y, &mut rng);
            }
        }

        // Out-migration follows G·R_a; in-migration is first set from the
        // intended rate with the schedule as age profile.
        let mut inflows = vec![vec![0.0; 2 * n_a]; n];
        let mut outflows = vec![vec![0.0; 2 * n_a]; n];
        let mut omr_standardized = vec![0.0; n];
        if spec.migration {
            for i in 0..n {
                let cells = &at_risk[i];
                let total: f64 = cells.iter().sum();
                let e: f64 = rng.sample(StandardNormal);
                let predicted =
                    intercepts[i] + spec.decomposition.slope * state[i].max(0.0) + spec.decomposition.sd_within * e;
                let (is, os) = repair(predicted, state[i]);
                omr_standardized[i] = os;
                let g = os / country_masi[i * periods.len()];
                let total_in = is * global_ratio * total * PERIOD_YEARS / 1000.0;
                for a in 0..n_a {
                    let group = cells[2 * a] + cells[2 * a + 1];
                    for s in 0..2 {
                        let share = if group > 0.0 { cells[2 * a + s] / group } else { 0.5 };
                        inflows[i][2 * a + s] = total_in * schedule.weights()[a] * share;
                        let rate = g * schedule.weights()[a] * PERIOD_YEARS / 1000.0;
                        outflows[i][2 * a + s] = (rate * cells[2 * a + s]).min(cells[2 * a + s]);
                    }
                }
            }
        }
        if spec.closed && spec.migration {
            // Every (age, sex) cell of the world's out-migrants is shared
            // among destinations in proportion to their intended inflow.
            let intended: Vec<f64> = inflows.iter().map(|f| f.iter().sum()).collect();
            let total_intended: f64 = intended.iter().sum();
            let mut pool = vec![0.0; 2 * n_a];
            for f in &outflows {
                for (p, v) in pool.iter_mut().zip(f) {
                    *p += v;
                }
            }
            for i in 0..n {
                let w = if total_intended > 0.0 { intended[i] / total_intended } else { 1.0 / n as f64 };
                for (dst, p) in inflows[i].iter_mut().zip(&pool) {
                    *dst = w * p;
                }
            }
        }

        for i in 0..n {
            let cells = &at_risk[i];
            let total: f64 = cells.iter().sum();
            let (inflow, outflow) = (&inflows[i], &outflows[i]);
            let (i_tot, o_tot): (f64, f64) = (inflow.iter().sum(), outflow.iter().sum());
            let scale = 1000.0 / (total * PERIOD_YEARS);
            let realized_imr = i_tot * scale;
            nmr.set(i, t, Some((i_tot - o_tot) * scale));
            imr_all.set(i, t, Some(realized_imr));
            if year >= spec.flow_start_year {
                imr_obs.set(i, t, Some(realized_imr));
            }
            let is = realized_imr / global_ratio;
            let os = omr_standardized[i];
            imr_star.set(i, t, Some(is));
            omr_star.set(i, t, Some(os));
            nmr_star.set(i, t, Some(is - os));
            state[i] = is - os;
            let next = population.cells_mut(i, t + 1);
            for k in 0..2 * n_a {
                next[k] = (cells[k] + inflow[k] - outflow[k]).max(0.0);
            }
            inflow_grid.cells_mut(i, t).copy_from_slice(inflow);
            outflow_grid.cells_mut(i, t).copy_from_slice(outflow);
        }
    }

    let age_flows = if spec.age_flows {
        let first = periods.years().iter().position(|&y| y >= spec.flow_start_year);
        match first.map(|f| PeriodAxis::uniform(periods.year(f), periods.len() - f)) {
            Some(axis) => {
                let offset = periods.index_of(axis.first()).expect("axis lies inside periods");
                let cut = |g: &PopulationGrid| {
                    let mut out = PopulationGrid::zeros(ids.clone(), axis.clone(), ages);
                    for i in 0..n {
                        for t in 0..axis.len() {
                            out.cells_mut(i, t).copy_from_slice(g.cells(i, t + offset));
                        }
                    }
                    out
                };
                Some(AgeFlows {
                    inflow: cut(&inflow_grid),
                    outflow: cut(&outflow_grid),
                })
            }
            None => None,
        }
    } else {
        None
    };
    let world = World {
        countries,
        population,
        nmr,
        imr: Some(imr_obs),
        age_flows,
        vitals,
        schedule,
    };
    Ok(SynthWorld {
        world,
        truth: SynthTruth {
            params,
            country_intercepts: intercepts,
            nmr_star,
            imr_star,
            omr_star,
            imr: imr_all,
            country_masi,
            global_masi,
        },
    })
}
