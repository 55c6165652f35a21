//! Forecasting: draws of standardized net rates become age- and
//! sex-specific flows, are rebalanced to net zero and projected forward with
//! a cohort-component model.

mod cohort;
mod flows;
mod forecast;
mod rebalance;
mod vitals;

pub use cohort::project_no_migration;
pub use flows::{
    apply_migration, cap_and_redistribute, destandardize, disaggregate_flows, gcc_outflow_schedule,
    recompute_standardized_nmr, split_standardized_rate, Disaggregated, FlowCells, MasiTerms,
};
pub use forecast::{
    run_forecast, run_forecast_observed, FlowGrids, ForecastConfig, PeriodObserver, PeriodRecord, RecordField,
    Trajectory, TrajectorySet,
};
pub use rebalance::{rebalance_global, RebalanceReport, MAX_PASSES};
pub use vitals::{VitalRates, VitalView};
