//! Forecast metrics and the out-of-sample backtesting harness.

mod backtest;
mod metrics;

pub use backtest::{run_backtest, BacktestConfig, BacktestPlan, CountryError, Method, MetricReport, MetricRow};
pub use metrics::{coverage_and_halfwidth, log_transform, lmae, mae, mase, mase_denominator, naive_errors};
