//! Command-line surface of the netmig engine: CSV ingestion, run
//! configuration, result files and reproducibility manifests.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod emit;
pub mod error;
pub mod ingest;
pub mod run;
pub mod series;

pub use config::{ModeSetting, RunConfig};
pub use error::{CliError, CliResult};
pub use run::{replay, run, Manifest, RunOutcome, SynthSettings, Task};
