//! Probabilistic forecasting of international net migration on an
//! age-standardized scale.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`decompose`] splits historic net migration rates into in- and
//!    out-migration rates with a random-intercept mixed-effects model.
//! 2. [`masi`] age-standardizes those rates with the Migration Age Structure
//!    Index, a dot product of population age shares with a fixed migration
//!    age schedule.
//! 3. [`nmr_model`] fits a Bayesian hierarchical AR(1) to the standardized
//!    net rates and draws future rates from the posterior.
//! 4. [`project`] turns sampled rates back into age- and sex-specific flows,
//!    rebalances them to global net zero and projects populations.
//!
//! [`validate`] holds the backtesting harness and forecast metrics, and
//! [`synth`] generates synthetic worlds with known ground truth.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod country;
pub mod decompose;
pub mod error;
pub mod grid;
pub mod history;
pub mod masi;
pub mod nmr_model;
pub mod panel;
pub mod project;
pub mod quantile;
pub mod rng;
pub mod schedule;
pub mod synth;
pub mod validate;
pub mod world;

pub use country::{CountryGroup, CountryMeta};
pub use decompose::MixedEffectsFit;
pub use error::{Error, Result};
pub use grid::{AgeGrid, AtRiskPopulation, PeriodAxis, PopulationGrid, Sex};
pub use history::{HistoricPanels, Mode, PrepareConfig, Prepared};
pub use masi::{Masi, MasiRatio};
pub use nmr_model::{McmcConfig, PosteriorSample};
pub use panel::{RateKind, RatePanel};
pub use project::{ForecastConfig, Trajectory, TrajectorySet, VitalRates};
pub use schedule::AgeSchedule;
pub use validate::{BacktestPlan, MetricReport};
pub use world::World;

/// Years covered by one projection step.
pub const PERIOD_YEARS: f64 = 5.0;
