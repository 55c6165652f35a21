//! Historic pipeline: at-risk populations, decomposition of net rates into
//! gross rates, age standardization and the standardized-scale fit used when
//! forecasting.

use crate::decompose::{fit_mixed_effects, repair, FitOptions, MixedEffectsFit};
use crate::error::{Error, Result};
use crate::grid::AtRiskPopulation;
use crate::masi::{Masi, MasiRatio};
use crate::panel::{RateKind, RatePanel};
use crate::world::World;
use crate::PERIOD_YEARS;

/// Whether rates are modeled on the age-standardized scale or as observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Standardized,
    /// All MASI ratios pinned to one: the age-agnostic baseline.
    Agnostic,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Standardized => "standardized",
            Mode::Agnostic => "agnostic",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "standardized" => Some(Mode::Standardized),
            "agnostic" => Some(Mode::Agnostic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrepareConfig {
    /// End year of the period whose at-risk age structure is the standard.
    /// `None` uses the last historic period.
    pub baseline_year: Option<i32>,
    pub mode: Mode,
    /// Countries smaller than this at the last snapshot are excluded from
    /// fitting, forecasting and rebalancing.
    pub min_population: f64,
    pub fit: FitOptions,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            baseline_year: None,
            mode: Mode::Standardized,
            min_population: 100_000.0,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoricPanels {
    pub nmr: RatePanel,
    pub imr: RatePanel,
    pub omr: RatePanel,
    pub imr_star: RatePanel,
    pub omr_star: RatePanel,
    pub nmr_star: RatePanel,
    /// Cells whose IMR came from observed flows rather than the model.
    pub observed_flow: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub mode: Mode,
    pub at_risk: AtRiskPopulation,
    pub masi: Masi,
    pub included: Vec<bool>,
    /// Decomposition fit on raw rates.
    pub fit_raw: MixedEffectsFit,
    /// Decomposition fit on standardized rates, used to split forecasts.
    pub fit_star: MixedEffectsFit,
    pub panels: HistoricPanels,
    pub warnings: Vec<String>,
}

impl Prepared {
    pub fn ratio(&self, i: usize, t: usize) -> MasiRatio {
        match self.mode {
            Mode::Standardized => self.masi.ratio(i, t),
            Mode::Agnostic => MasiRatio::ONE,
        }
    }

    /// Standardized net rates of included countries: the series the
    /// hierarchical model is fit to.
    pub fn model_panel(&self) -> RatePanel {
        let src = &self.panels.nmr_star;
        let keep: Vec<usize> = (0..src.n_countries()).filter(|&i| self.included[i]).collect();
        let mut out = RatePanel::empty(
            RateKind::NmrStar,
            keep.iter().map(|&i| src.countries()[i].clone()).collect(),
            src.periods().clone(),
        );
        for (k, &i) in keep.iter().enumerate() {
            for t in 0..src.periods().len() {
                out.set(k, t, src.get(i, t));
            }
        }
        out
    }
}

/// Index of the period ending in `year`.
pub fn reference_period(nmr: &RatePanel, year: Option<i32>) -> Result<usize> {
    let periods = nmr.periods();
    match year {
        None => Ok(periods.len() - 1),
        Some(y) => periods
            .index_of(y - PERIOD_YEARS as i32)
            .ok_or_else(|| Error::InvalidArgument(format!("no historic period ends in baseline year {y}"))),
    }
}

fn restricted(panel: &RatePanel, keep: &[bool]) -> RatePanel {
    let mut out = panel.clone();
    for i in 0..panel.n_countries() {
        if !keep[i] {
            for t in 0..panel.periods().len() {
                out.set(i, t, None);
            }
        }
    }
    out
}

pub fn prepare(world: &World, config: &PrepareConfig) -> Result<Prepared> {
    world.validate()?;
    let imr_observed = world
        .imr
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("observed in-migration rates are required".into()))?;
    let at_risk = world.at_risk()?;
    let reference = reference_period(&world.nmr, config.baseline_year)?;
    let masi = Masi::compute(&at_risk, &world.schedule, reference)?;
    let last = world.population.times().len() - 1;
    let included: Vec<bool> = (0..world.n_countries())
        .map(|i| world.population.total(i, last) >= config.min_population)
        .collect();
    let mut warnings = Vec::new();
    let n_excluded = included.iter().filter(|&&b| !b).count();
    if n_excluded > 0 {
        warnings.push(format!(
            "{n_excluded} countries below {} persons excluded from fitting and rebalancing",
            config.min_population
        ));
    }

    let nmr = world.nmr.clone().with_kind(RateKind::Nmr)?;
    let observed_imr = imr_observed_aligned(imr_observed, &nmr)?;
    let fit_raw = fit_mixed_effects(&restricted(&observed_imr, &included), &restricted(&nmr, &included), &config.fit)?;

    let ids = nmr.countries().to_vec();
    let periods = nmr.periods().clone();
    let empty = |k| RatePanel::empty(k, ids.clone(), periods.clone());
    let (mut imr, mut omr) = (empty(RateKind::Imr), empty(RateKind::Omr));
    let (mut imr_star, mut omr_star, mut nmr_star) =
        (empty(RateKind::ImrStar), empty(RateKind::OmrStar), empty(RateKind::NmrStar));
    let mut imr_star_observed = empty(RateKind::ImrStar);
    let mut observed_flow = vec![false; ids.len() * periods.len()];
    let mode = config.mode;
    for (i, t, n) in nmr.observed() {
        let obs = observed_imr.get(i, t);
        observed_flow[i * periods.len() + t] = obs.is_some();
        let predicted = obs.unwrap_or_else(|| fit_raw.predict_imr(&ids[i], n));
        let (inr, out) = repair(predicted, n);
        imr.set(i, t, Some(inr));
        omr.set(i, t, Some(out));
        let ratio = match mode {
            Mode::Standardized => masi.ratio(i, t),
            Mode::Agnostic => MasiRatio::ONE,
        };
        if !(ratio.country > 0.0 && ratio.global > 0.0) {
            return Err(Error::NonPositiveMasi {
                value: ratio.country.min(ratio.global),
            });
        }
        let (is, os) = (inr / ratio.global, out / ratio.country);
        imr_star.set(i, t, Some(is));
        omr_star.set(i, t, Some(os));
        nmr_star.set(i, t, Some(is - os));
        if obs.is_some() {
            imr_star_observed.set(i, t, Some(is));
        }
    }
    let fit_star = fit_mixed_effects(
        &restricted(&imr_star_observed, &included),
        &restricted(&nmr_star, &included),
        &config.fit,
    )?;
    warnings.extend(fit_raw.warnings.iter().map(|w| format!("raw fit: {w}")));
    warnings.extend(fit_star.warnings.iter().map(|w| format!("standardized fit: {w}")));
    Ok(Prepared {
        mode,
        at_risk,
        masi,
        included,
        fit_raw,
        fit_star,
        panels: HistoricPanels {
            nmr,
            imr,
            omr,
            imr_star,
            omr_star,
            nmr_star,
            observed_flow,
        },
        warnings,
    })
}

/// Observed IMR re-indexed onto the NMR panel's countries and periods.
fn imr_observed_aligned(observed: &RatePanel, nmr: &RatePanel) -> Result<RatePanel> {
    let mut out = RatePanel::empty(RateKind::Imr, nmr.countries().to_vec(), nmr.periods().clone());
    for (i, t, v) in observed.observed() {
        let id = &observed.countries()[i];
        let year = observed.periods().year(t);
        let (Some(ni), Some(nt)) = (nmr.country_index(id), nmr.periods().index_of(year)) else {
            continue;
        };
        out.set(ni, nt, Some(v));
    }
    if out.observed().next().is_none() {
        return Err(Error::InvalidArgument("no observed in-migration rates overlap the NMR panel".into()));
    }
    Ok(out)
}
