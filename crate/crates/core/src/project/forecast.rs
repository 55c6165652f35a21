use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{AgeGrid, PeriodAxis, PopulationGrid};
use crate::history::{Mode, Prepared};
use crate::masi::masi;
use crate::nmr_model::{draw_next_rate, PosteriorSample};
use crate::project::cohort::project_no_migration;
use crate::project::flows::{
    apply_migration, destandardize, disaggregate_flows, recompute_standardized_nmr, FlowCells, MasiTerms,
};
use crate::project::rebalance::rebalance_global;
use crate::quantile::quantiles;
use crate::rng::{stream, StreamKey};
use crate::world::World;
use crate::PERIOD_YEARS;

#[derive(Debug, Clone)]
pub struct ForecastConfig {
    /// Number of five-year periods.
    pub horizon: usize,
    pub trajectories: usize,
    pub seed: u64,
    /// Share of each rebalancing adjustment taken by inflows.
    pub rebalance_weight: f64,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// Keep full `(age, sex)` flow grids in every trajectory.
    pub retain_flow_grids: bool,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            horizon: 6,
            trajectories: 1000,
            seed: 1,
            rebalance_weight: 0.5,
            jobs: None,
            retain_flow_grids: false,
        }
    }
}

/// Totals of one country in one forecast period.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PeriodRecord {
    pub at_risk: f64,
    pub inflow: f64,
    pub outflow: f64,
    pub net: f64,
    /// Annual net migration rate per thousand on the observed scale.
    pub nmr: f64,
    /// Standardized net rate after rebalancing; the AR(1) state.
    pub nmr_star: f64,
    /// `C_{i,t} / C_{i,ref}`
    pub masi_ratio: f64,
    /// `Č_t / Č_ref`
    pub global_masi_ratio: f64,
    /// Population removed by clamping negative cells at zero.
    pub clamped: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordField {
    Net,
    Nmr,
    NmrStar,
    Inflow,
    Outflow,
}

impl RecordField {
    pub fn get(self, r: &PeriodRecord) -> f64 {
        match self {
            RecordField::Net => r.net,
            RecordField::Nmr => r.nmr,
            RecordField::NmrStar => r.nmr_star,
            RecordField::Inflow => r.inflow,
            RecordField::Outflow => r.outflow,
        }
    }
}

/// Flow grids indexed by forecast period.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGrids {
    pub inflow: PopulationGrid,
    pub outflow: PopulationGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub index: usize,
    /// Posterior draw used.
    pub draw: usize,
    /// Snapshots from the jump-off year onward.
    pub population: PopulationGrid,
    /// `records[i * horizon + k]`
    pub records: Vec<PeriodRecord>,
    pub flows: Option<FlowGrids>,
    pub max_rebalance_passes: usize,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn record(&self, i: usize, k: usize) -> &PeriodRecord {
        &self.records[i * (self.population.times().len() - 1) + k]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub countries: Vec<String>,
    pub ages: AgeGrid,
    /// Forecast period start years.
    pub periods: PeriodAxis,
    pub mode: Mode,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Values of one record field across trajectories.
    pub fn samples(&self, i: usize, k: usize, field: RecordField) -> Vec<f64> {
        self.trajectories.iter().map(|tr| field.get(tr.record(i, k))).collect()
    }

    /// Total population at snapshot `k` (0 is the jump-off) across
    /// trajectories.
    pub fn population_samples(&self, i: usize, k: usize) -> Vec<f64> {
        self.trajectories.iter().map(|tr| tr.population.total(i, k)).collect()
    }

    pub fn quantiles(&self, i: usize, k: usize, field: RecordField, ps: &[f64]) -> Vec<f64> {
        quantiles(&self.samples(i, k, field), ps)
    }

    /// Order-sensitive hash of every stored number, for reproducibility
    /// checks.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for tr in &self.trajectories {
            eat(tr.draw as f64);
            tr.population.values().iter().for_each(|&v| eat(v));
            for r in &tr.records {
                for v in [r.at_risk, r.inflow, r.outflow, r.net, r.nmr, r.nmr_star, r.clamped] {
                    eat(v);
                }
            }
            if let Some(f) = &tr.flows {
                f.inflow.values().iter().chain(f.outflow.values()).for_each(|&v| eat(v));
            }
        }
        h
    }
}

/// Called once per trajectory and period with the rebalanced flows of every
/// country.
pub trait PeriodObserver: Sync {
    fn observe(&self, trajectory: usize, period_year: i32, flows: &[FlowCells], active: &[bool]);
}

struct NoObserver;

impl PeriodObserver for NoObserver {
    fn observe(&self, _: usize, _: i32, _: &[FlowCells], _: &[bool]) {}
}

struct Setup<'a> {
    world: &'a World,
    prepared: &'a Prepared,
    posterior: &'a PosteriorSample,
    config: &'a ForecastConfig,
    periods: PeriodAxis,
    jump_off: usize,
    /// Posterior index of each country that is forecast.
    post_index: Vec<Option<usize>>,
    active: Vec<bool>,
    partition: Vec<usize>,
    start_nmr_star: Vec<f64>,
}

pub fn run_forecast(
    world: &World,
    prepared: &Prepared,
    posterior: &PosteriorSample,
    config: &ForecastConfig,
) -> Result<TrajectorySet> {
    run_forecast_observed(world, prepared, posterior, config, &NoObserver)
}

pub fn run_forecast_observed(
    world: &World,
    prepared: &Prepared,
    posterior: &PosteriorSample,
    config: &ForecastConfig,
    observer: &dyn PeriodObserver,
) -> Result<TrajectorySet> {
    if config.horizon == 0 || config.trajectories == 0 {
        return Err(Error::InvalidArgument("horizon and trajectory count must be positive".into()));
    }
    if posterior.is_empty() {
        return Err(Error::InvalidArgument("posterior sample is empty".into()));
    }
    let ids = world.ids();
    let jump_off_year = world.last_year();
    let periods = PeriodAxis::uniform(jump_off_year, config.horizon);
    let nmr_star = &prepared.panels.nmr_star;
    let last_t = nmr_star.periods().len() - 1;
    let post_index: Vec<Option<usize>> = ids.iter().map(|id| posterior.country_index(id)).collect();
    let active: Vec<bool> = (0..ids.len())
        .map(|i| prepared.included[i] && post_index[i].is_some())
        .collect();
    let start_nmr_star = (0..ids.len())
        .map(|i| nmr_star.get(i, last_t).unwrap_or(0.0))
        .collect();
    let setup = Setup {
        world,
        prepared,
        posterior,
        config,
        jump_off: world.population.times().len() - 1,
        periods,
        post_index,
        active,
        partition: world.countries.iter().map(|c| c.group.rebalance_partition()).collect(),
        start_nmr_star,
    };
    let run = || -> Result<Vec<Trajectory>> {
        (0..config.trajectories)
            .into_par_iter()
            .map(|j| run_trajectory(&setup, j, observer))
            .collect()
    };
    let trajectories = match config.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    Ok(TrajectorySet {
        countries: ids,
        ages: world.population.ages(),
        periods: setup.periods.clone(),
        mode: prepared.mode,
        trajectories,
    })
}

fn run_trajectory(setup: &Setup<'_>, j: usize, observer: &dyn PeriodObserver) -> Result<Trajectory> {
    let world = setup.world;
    let ages = world.population.ages();
    let n = world.n_countries();
    let horizon = setup.config.horizon;
    let n_cells = 2 * ages.len();
    let ids = world.ids();
    let snapshot_axis = PeriodAxis::uniform(setup.periods.first(), horizon + 1);
    let mut population = PopulationGrid::zeros(ids.clone(), snapshot_axis, ages);
    for i in 0..n {
        population
            .cells_mut(i, 0)
            .copy_from_slice(world.population.cells(i, setup.jump_off));
    }
    let mut flow_grids = setup.config.retain_flow_grids.then(|| FlowGrids {
        inflow: PopulationGrid::zeros(ids.clone(), setup.periods.clone(), ages),
        outflow: PopulationGrid::zeros(ids.clone(), setup.periods.clone(), ages),
    });
    let draw_index = j % setup.posterior.len();
    let draw = setup.posterior.draw_for_trajectory(j);
    let masi = &setup.prepared.masi;
    let standardized = setup.prepared.mode == Mode::Standardized;
    let mut current = setup.start_nmr_star.clone();
    let mut records = vec![PeriodRecord::default(); n * horizon];
    let mut max_passes = 0;
    let mut warnings = Vec::new();
    let wrap = |country: &str, year: i32, e: Error| Error::Trajectory {
        trajectory: j,
        country: country.to_string(),
        period: year,
        source: Box::new(e),
    };

    for (k, &year) in setup.periods.years().iter().enumerate() {
        let mut at_risk = Vec::with_capacity(n);
        for i in 0..n {
            let vitals = world.vitals.view(&ids[i], year).map_err(|e| wrap(&ids[i], year, e))?;
            at_risk.push(project_no_migration(population.cells(i, k), &vitals).map_err(|e| wrap(&ids[i], year, e))?);
        }
        let terms: Vec<MasiTerms> = if standardized {
            let mut world_ages = vec![0.0; ages.len()];
            for cells in &at_risk {
                for a in 0..ages.len() {
                    world_ages[a] += cells[2 * a] + cells[2 * a + 1];
                }
            }
            let global = shares_masi(&world_ages, &world.schedule).map_err(|e| wrap("world", year, e))?;
            at_risk
                .iter()
                .enumerate()
                .map(|(i, cells)| {
                    let by_age: Vec<f64> = (0..ages.len()).map(|a| cells[2 * a] + cells[2 * a + 1]).collect();
                    // Countries without migration never need their own MASI.
                    let country = if setup.active[i] {
                        shares_masi(&by_age, &world.schedule).map_err(|e| wrap(&ids[i], year, e))?
                    } else {
                        masi.country_reference(i)
                    };
                    Ok(MasiTerms {
                        country,
                        country_reference: masi.country_reference(i),
                        global,
                        global_reference: masi.global_reference(),
                    })
                })
                .collect::<Result<_>>()?
        } else {
            vec![MasiTerms::NEUTRAL; n]
        };

        let mut flows = vec![FlowCells::zeros(n_cells); n];
        for i in 0..n {
            if !setup.active[i] {
                continue;
            }
            let pi = setup.post_index[i].expect("active countries have posterior draws");
            let mut rng = stream(setup.config.seed, StreamKey::trajectory(j, &ids[i], year));
            let nmr_star = draw_next_rate(draw, pi, current[i], &mut rng);
            let (imr_star, omr_star) = setup.prepared.fit_star.decompose(&ids[i], nmr_star);
            let (imr, omr) = destandardize(imr_star, omr_star, &terms[i]).map_err(|e| wrap(&ids[i], year, e))?;
            let d = disaggregate_flows(imr, omr, &at_risk[i], ages, &world.schedule, &world.countries[i])
                .map_err(|e| wrap(&ids[i], year, e))?;
            if d.lost_outflow > 0.0 {
                warnings.push(format!(
                    "{} {year}: {:.1} emigrants exceed the at-risk population",
                    ids[i], d.lost_outflow
                ));
            }
            flows[i] = d.flows;
        }
        let at_risk_refs: Vec<&[f64]> = at_risk.iter().map(Vec::as_slice).collect();
        let report = rebalance_global(
            &mut flows,
            &at_risk_refs,
            &setup.partition,
            &setup.active,
            setup.config.rebalance_weight,
        )?;
        max_passes = max_passes.max(report.passes);
        observer.observe(j, year, &flows, &setup.active);

        for i in 0..n {
            let total: f64 = at_risk[i].iter().sum();
            let (inflow, outflow) = (flows[i].inflow_total(), flows[i].outflow_total());
            let ratio = terms[i].ratio();
            let mut record = PeriodRecord {
                at_risk: total,
                inflow,
                outflow,
                net: inflow - outflow,
                masi_ratio: ratio.country,
                global_masi_ratio: ratio.global,
                ..PeriodRecord::default()
            };
            if setup.active[i] {
                let star = recompute_standardized_nmr(inflow, outflow, total, &terms[i])
                    .map_err(|e| wrap(&ids[i], year, e))?;
                current[i] = star;
                record.nmr_star = star;
                record.nmr = 1000.0 * record.net / (total * PERIOD_YEARS);
            }
            let (next, clamped) = apply_migration(&at_risk[i], &flows[i]);
            record.clamped = clamped;
            population.cells_mut(i, k + 1).copy_from_slice(&next);
            if let Some(g) = flow_grids.as_mut() {
                g.inflow.cells_mut(i, k).copy_from_slice(&flows[i].inflow);
                g.outflow.cells_mut(i, k).copy_from_slice(&flows[i].outflow);
            }
            records[i * horizon + k] = record;
        }
    }
    Ok(Trajectory {
        index: j,
        draw: draw_index,
        population,
        records,
        flows: flow_grids,
        max_rebalance_passes: max_passes,
        warnings,
    })
}

fn shares_masi(by_age: &[f64], schedule: &crate::schedule::AgeSchedule) -> Result<f64> {
    let total: f64 = by_age.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroAtRisk);
    }
    let shares: Vec<f64> = by_age.iter().map(|p| p / total).collect();
    masi(&shares, schedule)
}
