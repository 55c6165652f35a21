//! Run configuration read from a TOML file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use netmig_core::country::CountryGroup;
use netmig_core::decompose::FitOptions;
use netmig_core::nmr_model::McmcConfig;
use netmig_core::validate::{BacktestConfig, Method};
use netmig_core::{ForecastConfig, Mode, PrepareConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSetting {
    #[default]
    Standardized,
    Agnostic,
}

impl ModeSetting {
    pub fn to_core(self) -> Mode {
        match self {
            ModeSetting::Standardized => Mode::Standardized,
            ModeSetting::Agnostic => Mode::Agnostic,
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "standardized" => Ok(ModeSetting::Standardized),
            "agnostic" => Ok(ModeSetting::Agnostic),
            _ => Err(CliError::validation(format!(
                "unknown mode `{s}` (expected standardized or agnostic)"
            ))),
        }
    }
}

/// Input files. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub countries: PathBuf,
    pub population: PathBuf,
    pub nmr: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flows: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flows_by_age: Option<PathBuf>,
    pub vitals: PathBuf,
    pub births: PathBuf,
    /// Missing means the default Rogers–Castro schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<PathBuf>,
}

impl DataPaths {
    /// `(role, path)` of every configured file, in a fixed order.
    pub fn files(&self) -> Vec<(&'static str, &Path)> {
        let mut out: Vec<(&'static str, &Path)> = vec![
            ("countries", &self.countries),
            ("population", &self.population),
            ("nmr", &self.nmr),
        ];
        if let Some(p) = &self.flows {
            out.push(("flows", p));
        }
        if let Some(p) = &self.flows_by_age {
            out.push(("flows_by_age", p));
        }
        out.push(("vitals", &self.vitals));
        out.push(("births", &self.births));
        if let Some(p) = &self.schedule {
            out.push(("schedule", p));
        }
        out
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.countries);
        fix(&mut self.population);
        fix(&mut self.nmr);
        fix(&mut self.vitals);
        fix(&mut self.births);
        for p in [&mut self.flows, &mut self.flows_by_age, &mut self.schedule].into_iter().flatten() {
            fix(p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    /// End year of the period supplying the standard age structure.
    pub baseline_year: Option<i32>,
    pub min_population: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            baseline_year: None,
            min_population: 100_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSettings {
    pub chains: usize,
    pub burn_in: usize,
    pub iterations: usize,
    pub thin: usize,
}

impl Default for McmcSettings {
    fn default() -> Self {
        let d = McmcConfig::default();
        Self {
            chains: d.chains,
            burn_in: d.burn_in,
            iterations: d.iterations,
            thin: d.thin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSettings {
    /// Five-year periods past the jump-off.
    pub horizon: usize,
    pub trajectories: usize,
    pub rebalance_weight: f64,
    /// Also write age- and sex-specific populations and flows.
    pub age_detail: bool,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        Self {
            horizon: 6,
            trajectories: 1000,
            rebalance_weight: 0.5,
            age_detail: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSettings {
    /// First forecast origin; by default the latest origin that still
    /// scores every horizon.
    pub first_origin: Option<i32>,
    pub max_horizon: usize,
    pub trajectories: usize,
    pub methods: Vec<String>,
    pub lmae_offset: f64,
}

impl Default for BacktestSettings {
    fn default() -> Self {
        Self {
            first_origin: None,
            max_horizon: 4,
            trajectories: 2000,
            methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            lmae_offset: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Required, either here or via `--seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub mode: ModeSetting,
    pub data: DataPaths,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub mcmc: McmcSettings,
    #[serde(default)]
    pub forecast: ForecastSettings,
    #[serde(default)]
    pub backtest: BacktestSettings,
    /// Country-group overrides, e.g. `XKX = "OTHER"`.
    #[serde(default)]
    pub groups: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.data.resolve(&base);
        Ok(config)
    }

    /// Apply command-line overrides, then check every setting.
    pub fn finalize(mut self, seed: Option<u64>, mode: Option<ModeSetting>) -> CliResult<Self> {
        if seed.is_some() {
            self.seed = seed;
        }
        if let Some(m) = mode {
            self.mode = m;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::validation(m.to_string()));
        if self.seed.is_none() {
            return bad("a seed is required (config `seed` or --seed)");
        }
        if self.forecast.trajectories == 0 || self.backtest.trajectories == 0 {
            return bad("trajectory count must be at least 1");
        }
        if self.forecast.horizon == 0 || self.backtest.max_horizon == 0 {
            return bad("horizons must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.forecast.rebalance_weight) {
            return bad("rebalance_weight must lie in [0, 1]");
        }
        if self.mcmc.chains == 0 || self.mcmc.iterations == 0 || self.mcmc.thin == 0 {
            return bad("mcmc chains, iterations and thin must be positive");
        }
        if !(self.model.min_population >= 0.0) {
            return bad("min_population must be nonnegative");
        }
        if !(self.backtest.lmae_offset > 0.0) {
            return bad("lmae_offset must be positive");
        }
        self.methods()?;
        self.group_overrides()?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or_default()
    }

    pub fn methods(&self) -> CliResult<Vec<Method>> {
        self.backtest
            .methods
            .iter()
            .map(|m| {
                Method::from_name(m).ok_or_else(|| CliError::validation(format!("unknown backtest method `{m}`")))
            })
            .collect()
    }

    pub fn group_overrides(&self) -> CliResult<Vec<(String, CountryGroup)>> {
        self.groups
            .iter()
            .map(|(code, g)| {
                CountryGroup::from_name(g)
                    .map(|g| (code.clone(), g))
                    .ok_or_else(|| CliError::validation(format!("unknown country group `{g}` for {code}")))
            })
            .collect()
    }

    pub fn prepare_config(&self) -> PrepareConfig {
        PrepareConfig {
            baseline_year: self.model.baseline_year,
            mode: self.mode.to_core(),
            min_population: self.model.min_population,
            fit: FitOptions::default(),
        }
    }

    /// Fitting runs single-threaded unless `--jobs` asks for more.
    pub fn mcmc_config(&self, jobs: Option<usize>) -> McmcConfig {
        McmcConfig {
            chains: self.mcmc.chains,
            burn_in: self.mcmc.burn_in,
            iterations: self.mcmc.iterations,
            thin: self.mcmc.thin,
            seed: self.seed(),
            parallel_chains: jobs.is_some_and(|j| j > 1),
            ..McmcConfig::default()
        }
    }

    pub fn forecast_config(&self, jobs: Option<usize>) -> ForecastConfig {
        ForecastConfig {
            horizon: self.forecast.horizon,
            trajectories: self.forecast.trajectories,
            seed: self.seed(),
            rebalance_weight: self.forecast.rebalance_weight,
            jobs,
            retain_flow_grids: self.forecast.age_detail,
        }
    }

    pub fn backtest_config(&self, jobs: Option<usize>) -> CliResult<BacktestConfig> {
        Ok(BacktestConfig {
            methods: self.methods()?,
            prepare: self.prepare_config(),
            mcmc: self.mcmc_config(jobs),
            forecast: ForecastConfig {
                trajectories: self.backtest.trajectories,
                ..self.forecast_config(jobs)
            },
            lmae_offset: self.backtest.lmae_offset,
        })
    }
}
