use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use netmig_cli::config::{ModeSetting, RunConfig};
use netmig_cli::{replay, run, CliError, CliResult, SynthSettings, Task};

#[derive(Parser)]
#[command(name = "netmig", version, about = "Age-standardized probabilistic net migration forecasts")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `standardized` or `agnostic`; overrides the config.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Worker threads for trajectories (and chains when > 1).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Root of the content-addressed output directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic fixture world with known ground truth.
    Synth(SynthArgs),
    /// Split historic net rates into in- and out-migration rates.
    Decompose,
    /// Age-standardize historic rates with the MASI.
    Standardize,
    /// Fit the hierarchical AR(1) model and dump the posterior.
    Fit,
    /// Simulate joint trajectories of rates, flows and populations.
    Forecast,
    /// Out-of-sample validation against persistence.
    Backtest,
    /// Quantile series from the trajectory files of a forecast run.
    Report {
        /// Output directory of a `forecast` run.
        #[arg(long)]
        from: PathBuf,
    },
    /// Re-run a manifest and check the outputs are byte-identical.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    countries: usize,
    /// Historic five-year periods.
    #[arg(long, default_value_t = 14)]
    periods: usize,
    /// Extra periods of vital rates for forecasting.
    #[arg(long, default_value_t = 16)]
    forecast_periods: usize,
    #[arg(long, default_value_t = 1950)]
    first_year: i32,
    #[arg(long, default_value_t = 21)]
    age_groups: usize,
    /// Observed in-migration starts with this period.
    #[arg(long, default_value_t = 1990)]
    flow_start_year: i32,
    #[arg(long)]
    no_migration: bool,
    #[arg(long)]
    flat_schedule: bool,
    #[arg(long)]
    identical_pyramids: bool,
    /// Include GCC states and their labor-origin countries.
    #[arg(long)]
    gcc: bool,
    /// Countries of 5,000 persons, below the inclusion threshold.
    #[arg(long, default_value_t = 0)]
    small_countries: usize,
    /// Emit age- and sex-specific flows for the observed-flow periods.
    #[arg(long)]
    age_flows: bool,
}

fn task(cli: &Cli) -> CliResult<Task> {
    let mode = cli.mode.as_deref().map(ModeSetting::parse).transpose()?;
    let config = || -> CliResult<RunConfig> {
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| CliError::validation("this command needs --config"))?;
        RunConfig::load(path)?.finalize(cli.seed, mode)
    };
    Ok(match &cli.command {
        Command::Synth(a) => Task::Synth {
            settings: SynthSettings {
                countries: a.countries,
                periods: a.periods,
                forecast_periods: a.forecast_periods,
                first_year: a.first_year,
                age_groups: a.age_groups,
                seed: cli
                    .seed
                    .ok_or_else(|| CliError::validation("synth needs --seed"))?,
                migration: !a.no_migration,
                flat_schedule: a.flat_schedule,
                identical_pyramids: a.identical_pyramids,
                gcc: a.gcc,
                small_countries: a.small_countries,
                age_flows: a.age_flows,
                flow_start_year: a.flow_start_year,
            },
        },
        Command::Decompose => Task::Decompose { config: config()? },
        Command::Standardize => Task::Standardize { config: config()? },
        Command::Fit => Task::Fit { config: config()? },
        Command::Forecast => Task::Forecast { config: config()? },
        Command::Backtest => Task::Backtest { config: config()? },
        Command::Report { from } => Task::Report { from: from.clone() },
        Command::Replay { .. } => unreachable!("handled before"),
    })
}

fn main_inner(cli: &Cli) -> CliResult<()> {
    if let Command::Replay { manifest } = &cli.command {
        let outcome = replay(manifest, cli.jobs, &cli.out)?;
        println!("{}", outcome.run.dir.display());
        if !outcome.mismatches.is_empty() {
            return Err(CliError::Numeric(format!(
                "replay differs in: {}",
                outcome.mismatches.join(", ")
            )));
        }
        log::info!("all {} output files reproduced", outcome.run.manifest.outputs.len());
        return Ok(());
    }
    let task = task(cli)?;
    let outcome = run(&task, cli.jobs, &cli.out)?;
    for w in &outcome.manifest.warnings {
        log::warn!("{w}");
    }
    println!("{}", outcome.dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netmig: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
