use crate::error::{Error, Result};
use crate::history::{prepare, Mode, PrepareConfig};
use crate::nmr_model::{fit_mcmc, McmcConfig};
use crate::panel::RatePanel;
use crate::project::{run_forecast, ForecastConfig, RecordField};
use crate::validate::metrics::{coverage_and_halfwidth, lmae, mae, mase_denominator};
use crate::world::World;
use crate::PERIOD_YEARS;

const STEP: i32 = PERIOD_YEARS as i32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Persistence,
    Agnostic,
    Standardized,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Persistence, Method::Agnostic, Method::Standardized];

    pub fn name(self) -> &'static str {
        match self {
            Method::Persistence => "persistence",
            Method::Agnostic => "agnostic",
            Method::Standardized => "standardized",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    fn mode(self) -> Option<Mode> {
        match self {
            Method::Persistence => None,
            Method::Agnostic => Some(Mode::Agnostic),
            Method::Standardized => Some(Mode::Standardized),
        }
    }
}

/// Forecast origins and in-sample windows.
///
/// A forecast made at origin `t0` uses data for periods before `t0` and is
/// scored `k` periods ahead at the period starting `t0 + 5(k − 1)`. Origins
/// for horizon `k` run from the first origin until that target reaches the
/// last observed period. In-sample persistence errors for horizon `k` use
/// origins `s0` from the first period until `s0 + 5k` is the last period
/// before the first origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BacktestPlan {
    pub first_period: i32,
    pub first_origin: i32,
    pub last_period: i32,
    pub max_horizon: usize,
}

impl BacktestPlan {
    pub fn new(first_period: i32, first_origin: i32, last_period: i32, max_horizon: usize) -> Result<Self> {
        let plan = Self {
            first_period,
            first_origin,
            last_period,
            max_horizon,
        };
        let aligned = |y: i32| (y - first_period).rem_euclid(STEP) == 0;
        if !aligned(first_origin) || !aligned(last_period) {
            return Err(Error::InvalidAxis("backtest years must lie on the period grid".into()));
        }
        if max_horizon == 0 || plan.origins(max_horizon).is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no {max_horizon}-period-ahead origin between {first_origin} and {last_period}"
            )));
        }
        if plan.in_sample_origins(max_horizon).is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no in-sample window for horizon {max_horizon} before {first_origin}"
            )));
        }
        Ok(plan)
    }

    /// Plan over a panel's periods.
    pub fn for_panel(nmr: &RatePanel, first_origin: i32, max_horizon: usize) -> Result<Self> {
        Self::new(nmr.periods().first(), first_origin, nmr.periods().last(), max_horizon)
    }

    pub fn horizons(&self) -> impl Iterator<Item = usize> {
        1..=self.max_horizon
    }

    /// `{t0}_k`
    pub fn origins(&self, k: usize) -> Vec<i32> {
        let last = self.last_period - STEP * (k as i32 - 1);
        (self.first_origin..=last).step_by(STEP as usize).collect()
    }

    pub fn target(&self, origin: i32, k: usize) -> i32 {
        origin + STEP * (k as i32 - 1)
    }

    /// `{s0}_k`
    pub fn in_sample_origins(&self, k: usize) -> Vec<i32> {
        let last = self.first_origin - STEP - STEP * k as i32;
        if last < self.first_period {
            return Vec::new();
        }
        (self.first_period..=last).step_by(STEP as usize).collect()
    }
}

#[derive(Debug, Clone)]
pub struct BacktestConfig {
    pub methods: Vec<Method>,
    pub prepare: PrepareConfig,
    pub mcmc: McmcConfig,
    /// Horizon is set per origin; the trajectory count is the number of
    /// posterior predictive draws whose median is the point forecast.
    pub forecast: ForecastConfig,
    pub lmae_offset: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            prepare: PrepareConfig::default(),
            mcmc: McmcConfig::default(),
            forecast: ForecastConfig {
                trajectories: 2000,
                ..ForecastConfig::default()
            },
            lmae_offset: 1.0,
        }
    }
}

/// One scored forecast cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CountryError {
    pub method: Method,
    pub horizon: usize,
    pub origin: i32,
    pub target: i32,
    pub country: String,
    pub forecast: f64,
    pub truth: f64,
    pub interval95: Option<(f64, f64)>,
    pub interval80: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub horizon: usize,
    pub method: Method,
    pub n_cells: usize,
    pub mae: f64,
    pub lmae: f64,
    /// `None` when the in-sample persistence error is zero.
    pub mase: Option<f64>,
    pub coverage95: Option<f64>,
    pub halfwidth95: Option<f64>,
    pub halfwidth80: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub plan: BacktestPlan,
    pub countries: Vec<String>,
    pub rows: Vec<MetricRow>,
    pub errors: Vec<CountryError>,
    pub warnings: Vec<String>,
}

impl MetricReport {
    pub fn row(&self, method: Method, horizon: usize) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.method == method && r.horizon == horizon)
    }

    /// Per-country MAE and MASE for one method and horizon. Countries with
    /// a constant in-sample series get `None` for MASE.
    pub fn by_country(&self, method: Method, horizon: usize, in_sample: &RatePanel) -> Vec<(String, f64, Option<f64>)> {
        let origins = self.plan.in_sample_origins(horizon);
        self.countries
            .iter()
            .map(|c| {
                let cells: Vec<&CountryError> = self
                    .errors
                    .iter()
                    .filter(|e| e.method == method && e.horizon == horizon && &e.country == c)
                    .collect();
                let m = cells.iter().map(|e| (e.forecast - e.truth).abs()).sum::<f64>() / cells.len().max(1) as f64;
                let denom = in_sample
                    .country_index(c)
                    .and_then(|i| mase_denominator(&single_country(in_sample, i), &origins, horizon));
                (c.clone(), m, denom.map(|d| m / d))
            })
            .collect()
    }
}

fn single_country(panel: &RatePanel, i: usize) -> RatePanel {
    let mut out = RatePanel::empty(panel.kind(), vec![panel.countries()[i].clone()], panel.periods().clone());
    for t in 0..panel.periods().len() {
        out.set(0, t, panel.get(i, t));
    }
    out
}

/// Fit every method at every origin on the data available before it and
/// score the point forecasts (posterior medians) and intervals.
pub fn run_backtest(world: &World, plan: &BacktestPlan, config: &BacktestConfig) -> Result<MetricReport> {
    world.validate()?;
    let nmr = &world.nmr;
    let origins = plan.origins(1);
    let ids = world.ids();
    // Score the countries that clear the size threshold at every origin.
    let mut scored = vec![true; ids.len()];
    for &t0 in &origins {
        let snap = world
            .population
            .times()
            .index_of(t0)
            .ok_or_else(|| Error::InvalidAxis(format!("no population snapshot for origin {t0}")))?;
        for (i, keep) in scored.iter_mut().enumerate() {
            *keep &= world.population.total(i, snap) >= config.prepare.min_population;
        }
    }
    let countries: Vec<String> = (0..ids.len()).filter(|&i| scored[i]).map(|i| ids[i].clone()).collect();
    let mut errors = Vec::new();
    let mut warnings = Vec::new();

    for &t0 in &origins {
        let past = world.truncated(t0)?;
        let steps = ((plan.last_period - t0) / STEP) as usize + 1;
        let steps_scored = steps.min(plan.max_horizon);
        for &method in &config.methods {
            match method.mode() {
                None => {
                    let last = past.nmr.periods().len() - 1;
                    for i in (0..ids.len()).filter(|&i| scored[i]) {
                        let f = past.nmr.get(i, last).unwrap_or(0.0);
                        for k in 1..=steps_scored {
                            let target = plan.target(t0, k);
                            let Some(truth) = nmr.periods().index_of(target).and_then(|t| nmr.get(i, t)) else {
                                continue;
                            };
                            errors.push(CountryError {
                                method,
                                horizon: k,
                                origin: t0,
                                target,
                                country: ids[i].clone(),
                                forecast: f,
                                truth,
                                interval95: None,
                                interval80: None,
                            });
                        }
                    }
                }
                Some(mode) => {
                    let prep_cfg = PrepareConfig {
                        mode,
                        ..config.prepare.clone()
                    };
                    let prepared = prepare(&past, &prep_cfg)?;
                    let posterior = fit_mcmc(&prepared.model_panel(), &config.mcmc)?;
                    warnings.extend(
                        posterior
                            .diagnostics
                            .warnings
                            .iter()
                            .map(|w| format!("{} at {t0}: {w}", method.name())),
                    );
                    let fc = ForecastConfig {
                        horizon: steps,
                        ..config.forecast.clone()
                    };
                    let set = run_forecast(&past, &prepared, &posterior, &fc)?;
                    for i in (0..ids.len()).filter(|&i| scored[i]) {
                        for k in 1..=steps_scored {
                            let target = plan.target(t0, k);
                            let Some(truth) = nmr.periods().index_of(target).and_then(|t| nmr.get(i, t)) else {
                                continue;
                            };
                            let q = set.quantiles(i, k - 1, RecordField::Nmr, &[0.5, 0.025, 0.975, 0.1, 0.9]);
                            errors.push(CountryError {
                                method,
                                horizon: k,
                                origin: t0,
                                target,
                                country: ids[i].clone(),
                                forecast: q[0],
                                truth,
                                interval95: Some((q[1], q[2])),
                                interval80: Some((q[3], q[4])),
                            });
                        }
                    }
                }
            }
        }
    }

    let in_sample = {
        let mut p = RatePanel::empty(nmr.kind(), countries.clone(), nmr.periods().clone());
        for (k, i) in (0..ids.len()).filter(|&i| scored[i]).enumerate() {
            for t in 0..nmr.periods().len() {
                p.set(k, t, nmr.get(i, t));
            }
        }
        p
    };
    let mut rows = Vec::new();
    for k in plan.horizons() {
        let s0 = plan.in_sample_origins(k);
        let denom = mase_denominator(&in_sample, &s0, k);
        if denom.is_none() {
            warnings.push(format!("MASE undefined at horizon {k}: constant in-sample series"));
        }
        for &method in &config.methods {
            let cells: Vec<&CountryError> = errors.iter().filter(|e| e.method == method && e.horizon == k).collect();
            if cells.is_empty() {
                continue;
            }
            let f: Vec<f64> = cells.iter().map(|e| e.forecast).collect();
            let r: Vec<f64> = cells.iter().map(|e| e.truth).collect();
            let m = mae(&f, &r)?;
            let interval_stats = |pick: fn(&CountryError) -> Option<(f64, f64)>| -> Result<Option<(f64, f64)>> {
                let iv: Option<Vec<(f64, f64)>> = cells.iter().map(|e| pick(e)).collect();
                iv.map(|iv| coverage_and_halfwidth(&iv, &r)).transpose()
            };
            let s95 = interval_stats(|e| e.interval95)?;
            let s80 = interval_stats(|e| e.interval80)?;
            rows.push(MetricRow {
                horizon: k,
                method,
                n_cells: cells.len(),
                mae: m,
                lmae: lmae(&f, &r, config.lmae_offset)?,
                mase: denom.map(|d| m / d),
                coverage95: s95.map(|s| s.0),
                halfwidth95: s95.map(|s| s.1),
                halfwidth80: s80.map(|s| s.1),
            });
        }
    }
    Ok(MetricReport {
        plan: *plan,
        countries,
        rows,
        errors,
        warnings,
    })
}
