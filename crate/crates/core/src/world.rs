//! A historic dataset: populations, net migration, optional flow data,
//! vital rates and the migration age schedule.

use crate::country::CountryMeta;
use crate::error::{Error, Result};
use crate::grid::{AtRiskPopulation, PopulationGrid};
use crate::panel::RatePanel;
use crate::project::VitalRates;
use crate::schedule::AgeSchedule;
use crate::PERIOD_YEARS;

/// Age- and sex-specific flow counts per period.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeFlows {
    pub inflow: PopulationGrid,
    pub outflow: PopulationGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub countries: Vec<CountryMeta>,
    /// Population snapshots by year.
    pub population: PopulationGrid,
    /// Net migration rates per period; periods start at every snapshot
    /// year except the last.
    pub nmr: RatePanel,
    /// Observed in-migration rates (typically 1990 onward).
    pub imr: Option<RatePanel>,
    /// Age-resolved flows, when available, make the at-risk population
    /// exact by age and sex.
    pub age_flows: Option<AgeFlows>,
    pub vitals: VitalRates,
    pub schedule: AgeSchedule,
}

impl World {
    pub fn ids(&self) -> Vec<String> {
        self.countries.iter().map(|c| c.iso3.clone()).collect()
    }

    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    /// Last population snapshot year: the forecast jump-off.
    pub fn last_year(&self) -> i32 {
        self.population.times().last()
    }

    pub fn validate(&self) -> Result<()> {
        let ids = self.ids();
        if self.population.countries() != ids.as_slice() || self.nmr.countries() != ids.as_slice() {
            return Err(Error::InvalidArgument("country lists of population and NMR differ".into()));
        }
        self.schedule.check_grid(self.population.ages())?;
        let years = self.population.times();
        if years.len() < 2 {
            return Err(Error::InvalidAxis("need at least two population snapshots".into()));
        }
        for &p in self.nmr.periods().years() {
            if years.index_of(p + PERIOD_YEARS as i32).is_none() {
                return Err(Error::InvalidAxis(format!(
                    "NMR period {p} has no end-of-period population snapshot"
                )));
            }
        }
        for (i, id) in ids.iter().enumerate() {
            for t in 0..self.nmr.periods().len() {
                if self.nmr.get(i, t).is_none() {
                    return Err(Error::InvalidArgument(format!(
                        "missing NMR for {id} in {}",
                        self.nmr.periods().year(t)
                    )));
                }
            }
        }
        Ok(())
    }

    /// `P̃_{i,t,a,s} = P_{i,t+5,a,s} − N_{i,t,a,s}` for every NMR period. With
    /// only total net migration, the end-of-period pyramid is scaled to the
    /// at-risk total `P_{t+5} / (1 + 5·NMR/1000)`.
    pub fn at_risk(&self) -> Result<AtRiskPopulation> {
        let periods = self.nmr.periods().clone();
        let ages = self.population.ages();
        let mut net = PopulationGrid::from_signed_values(
            self.ids(),
            periods.clone(),
            ages,
            vec![0.0; self.n_countries() * periods.len() * ages.len() * 2],
        )?;
        for i in 0..self.n_countries() {
            for (t, &year) in periods.years().iter().enumerate() {
                let cells = net.cells_mut(i, t);
                if let Some(flows) = &self.age_flows {
                    if let Some(ft) = flows.inflow.times().index_of(year) {
                        let inflow = flows.inflow.cells(i, ft);
                        let outflow = flows.outflow.cells(i, ft);
                        for k in 0..cells.len() {
                            cells[k] = inflow[k] - outflow[k];
                        }
                        continue;
                    }
                }
                let end_t = self.population.times().index_of(year + PERIOD_YEARS as i32).ok_or_else(|| {
                    Error::InvalidAxis(format!("no population snapshot for {}", year + 5))
                })?;
                let end = self.population.cells(i, end_t);
                let end_total: f64 = end.iter().sum();
                let nmr = self.nmr.get(i, t).unwrap_or(0.0);
                let at_risk_total = end_total / (1.0 + PERIOD_YEARS * nmr / 1000.0);
                if !(at_risk_total > 0.0) || end_total <= 0.0 {
                    return Err(Error::NonPositiveAtRisk {
                        country: self.countries[i].iso3.clone(),
                        period: year,
                    });
                }
                let keep = at_risk_total / end_total;
                for (c, e) in cells.iter_mut().zip(end) {
                    *c = e * (1.0 - keep);
                }
            }
        }
        AtRiskPopulation::from_end_and_net(&self.population, &net)
    }

    /// The world as it was known at `year`: snapshots up to `year`, periods
    /// ending by `year`. Vital rates are kept whole.
    pub fn truncated(&self, year: i32) -> Result<World> {
        let years = self
            .population
            .times()
            .truncated(year)
            .ok_or_else(|| Error::InvalidAxis(format!("no population snapshot by {year}")))?;
        let mut population = PopulationGrid::zeros(self.ids(), years.clone(), self.population.ages());
        for i in 0..self.n_countries() {
            for t in 0..years.len() {
                population.cells_mut(i, t).copy_from_slice(self.population.cells(i, t));
            }
        }
        let last_period = year - PERIOD_YEARS as i32;
        let nmr = self
            .nmr
            .truncated(last_period)
            .ok_or_else(|| Error::InvalidAxis(format!("no NMR periods before {year}")))?;
        let imr = self.imr.as_ref().and_then(|p| p.truncated(last_period));
        let age_flows = match &self.age_flows {
            Some(f) => match f.inflow.times().truncated(last_period) {
                Some(axis) => {
                    let cut = |g: &PopulationGrid| -> Result<PopulationGrid> {
                        let mut out = PopulationGrid::zeros(self.ids(), axis.clone(), g.ages());
                        for i in 0..self.n_countries() {
                            for t in 0..axis.len() {
                                out.cells_mut(i, t).copy_from_slice(g.cells(i, t));
                            }
                        }
                        Ok(out)
                    };
                    Some(AgeFlows {
                        inflow: cut(&f.inflow)?,
                        outflow: cut(&f.outflow)?,
                    })
                }
                None => None,
            },
            None => None,
        };
        Ok(World {
            countries: self.countries.clone(),
            population,
            nmr,
            imr,
            age_flows,
            vitals: self.vitals.clone(),
            schedule: self.schedule.clone(),
        })
    }
}
