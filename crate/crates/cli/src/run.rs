//! Subcommand execution, content-addressed output directories and run
//! manifests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use netmig_core::decompose::MixedEffectsFit;
use netmig_core::history::{prepare, Prepared};
use netmig_core::nmr_model::{fit_mcmc, PosteriorSample};
use netmig_core::project::run_forecast;
use netmig_core::synth::{synth_world, ScheduleKind, SynthSpec};
use netmig_core::validate::{run_backtest, BacktestPlan, Method};
use netmig_core::{PERIOD_YEARS, World};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::emit::{json_file, num, opt_num, world_files, CsvBuilder, OutputFile};
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest, Ingested};
use crate::series::TrajectoryTable;

/// Settings of a generated fixture world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSettings {
    pub countries: usize,
    pub periods: usize,
    pub forecast_periods: usize,
    pub first_year: i32,
    pub age_groups: usize,
    pub seed: u64,
    pub migration: bool,
    pub flat_schedule: bool,
    pub identical_pyramids: bool,
    pub gcc: bool,
    pub small_countries: usize,
    pub age_flows: bool,
    pub flow_start_year: i32,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let d = SynthSpec::default();
        Self {
            countries: d.n_countries,
            periods: d.n_periods,
            forecast_periods: d.forecast_periods,
            first_year: d.first_year,
            age_groups: d.n_age_groups,
            seed: d.seed,
            migration: d.migration,
            flat_schedule: false,
            identical_pyramids: d.identical_pyramids,
            gcc: d.with_gcc,
            small_countries: d.n_small,
            age_flows: d.age_flows,
            flow_start_year: d.flow_start_year,
        }
    }
}

impl SynthSettings {
    pub fn spec(&self) -> SynthSpec {
        SynthSpec {
            n_countries: self.countries,
            first_year: self.first_year,
            n_periods: self.periods,
            forecast_periods: self.forecast_periods,
            flow_start_year: self.flow_start_year,
            n_age_groups: self.age_groups,
            seed: self.seed,
            migration: self.migration,
            schedule: if self.flat_schedule {
                ScheduleKind::Flat
            } else {
                ScheduleKind::RogersCastro
            },
            identical_pyramids: self.identical_pyramids,
            n_small: self.small_countries,
            with_gcc: self.gcc,
            age_flows: self.age_flows,
            ..SynthSpec::default()
        }
    }
}

/// A fully resolved unit of work; stored in the manifest for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Task {
    Synth { settings: SynthSettings },
    Decompose { config: RunConfig },
    Standardize { config: RunConfig },
    Fit { config: RunConfig },
    Forecast { config: RunConfig },
    Backtest { config: RunConfig },
    Report { from: PathBuf },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Synth { .. } => "synth",
            Task::Decompose { .. } => "decompose",
            Task::Standardize { .. } => "standardize",
            Task::Fit { .. } => "fit",
            Task::Forecast { .. } => "forecast",
            Task::Backtest { .. } => "backtest",
            Task::Report { .. } => "report",
        }
    }

    pub fn config(&self) -> Option<&RunConfig> {
        match self {
            Task::Decompose { config }
            | Task::Standardize { config }
            | Task::Fit { config }
            | Task::Forecast { config }
            | Task::Backtest { config } => Some(config),
            Task::Synth { .. } | Task::Report { .. } => None,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Task::Synth { settings } => Some(settings.seed),
            _ => self.config().map(RunConfig::seed),
        }
    }

    fn inputs(&self) -> Vec<(String, PathBuf)> {
        match self {
            Task::Synth { .. } => Vec::new(),
            Task::Report { from } => vec![
                ("trajectories".into(), from.join("trajectories.csv")),
                ("population".into(), from.join("population.csv")),
            ],
            _ => self
                .config()
                .map(|c| c.data.files().into_iter().map(|(r, p)| (r.to_string(), p.to_path_buf())).collect())
                .unwrap_or_default(),
        }
    }

    /// Settings without file locations: the hash covers file contents, so
    /// moving the inputs does not change it.
    fn settings_value(&self) -> CliResult<Value> {
        let mut v = serde_json::to_value(self).map_err(|e| CliError::Io(e.to_string()))?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("from");
            if let Some(config) = obj.get_mut("config").and_then(Value::as_object_mut) {
                config.remove("data");
            }
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub engine: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    /// Worker threads requested; results do not depend on it.
    pub jobs: Option<usize>,
    pub task: Task,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_time_seconds: f64,
    pub warnings: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn digest_inputs(task: &Task) -> CliResult<Vec<FileDigest>> {
    task.inputs()
        .into_iter()
        .map(|(name, path)| {
            let bytes = std::fs::read(&path)
                .map_err(|e| CliError::validation(format!("cannot read {name} file {}: {e}", path.display())))?;
            Ok(FileDigest {
                name,
                sha256: sha256_hex(&bytes),
                path: Some(path),
            })
        })
        .collect()
}

/// Hash of the command, its settings and its input contents.
pub fn config_hash(task: &Task, inputs: &[FileDigest]) -> CliResult<String> {
    let digests: Vec<Value> = inputs.iter().map(|d| json!([d.name, d.sha256])).collect();
    let canonical = json!({
        "engine_version": env!("CARGO_PKG_VERSION"),
        "task": task.settings_value()?,
        "inputs": digests,
    });
    Ok(sha256_hex(canonical.to_string().as_bytes()))
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

/// Execute `task` and write its results plus a manifest to
/// `<out_root>/<command>-<hash prefix>/`.
pub fn run(task: &Task, jobs: Option<usize>, out_root: &Path) -> CliResult<RunOutcome> {
    let inputs = digest_inputs(task)?;
    let hash = config_hash(task, &inputs)?;
    let started = Instant::now();
    let (files, warnings) = execute(task, jobs)?;
    let wall_time_seconds = started.elapsed().as_secs_f64();

    let dir = out_root.join(format!("{}-{}", task.name(), &hash[..16]));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut outputs = Vec::with_capacity(files.len());
    for (name, bytes) in &files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        outputs.push(FileDigest {
            name: name.clone(),
            path: None,
            sha256: sha256_hex(bytes),
        });
    }
    let manifest = Manifest {
        engine: "netmig".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: task.name().into(),
        config_hash: hash,
        seed: task.seed(),
        jobs,
        task: task.clone(),
        inputs,
        outputs,
        wall_time_seconds,
        warnings,
    };
    let (_, bytes) = json_file(MANIFEST_FILE, &manifest)?;
    std::fs::write(dir.join(MANIFEST_FILE), bytes)?;
    Ok(RunOutcome { dir, manifest })
}

pub struct ReplayOutcome {
    pub run: RunOutcome,
    /// Output files whose hash differs from the recorded one.
    pub mismatches: Vec<String>,
}

pub fn read_manifest(path: &Path) -> CliResult<Manifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(format!("manifest {}: {e}", path.display())))
}

/// Re-run a recorded task after checking its inputs are unchanged, and
/// compare the new outputs with the recorded hashes.
pub fn replay(manifest_path: &Path, jobs: Option<usize>, out_root: &Path) -> CliResult<ReplayOutcome> {
    let recorded = read_manifest(manifest_path)?;
    if recorded.version != env!("CARGO_PKG_VERSION") {
        return Err(CliError::validation(format!(
            "manifest was written by engine {}, this is {}",
            recorded.version,
            env!("CARGO_PKG_VERSION")
        )));
    }
    let current = digest_inputs(&recorded.task)?;
    for (old, new) in recorded.inputs.iter().zip(&current) {
        if old.sha256 != new.sha256 {
            return Err(CliError::validation(format!("input {} changed since the recorded run", old.name)));
        }
    }
    let run = run(&recorded.task, jobs.or(recorded.jobs), out_root)?;
    let mut mismatches = Vec::new();
    for old in &recorded.outputs {
        match run.manifest.outputs.iter().find(|o| o.name == old.name) {
            Some(new) if new.sha256 == old.sha256 => {}
            _ => mismatches.push(old.name.clone()),
        }
    }
    for new in &run.manifest.outputs {
        if !recorded.outputs.iter().any(|o| o.name == new.name) {
            mismatches.push(new.name.clone());
        }
    }
    Ok(ReplayOutcome { run, mismatches })
}

type Produced = (Vec<OutputFile>, Vec<String>);

fn execute(task: &Task, jobs: Option<usize>) -> CliResult<Produced> {
    match task {
        Task::Synth { settings } => synth(settings),
        Task::Report { from } => {
            let table = TrajectoryTable::read(from)?;
            Ok((vec![table.summary_csv("report.csv")], Vec::new()))
        }
        Task::Backtest { config } => backtest(config, jobs),
        Task::Decompose { config } => {
            let (loaded, prepared) = load_and_prepare(config)?;
            let files = vec![decomposition_csv(&loaded.world, &prepared), json_file("fit.json", &fit_summary(&prepared.fit_raw))?];
            Ok((files, merge(loaded.warnings, prepared.warnings)))
        }
        Task::Standardize { config } => {
            let (loaded, prepared) = load_and_prepare(config)?;
            let files = vec![
                standardized_csv(&prepared),
                json_file("fit_standardized.json", &fit_summary(&prepared.fit_star))?,
            ];
            Ok((files, merge(loaded.warnings, prepared.warnings)))
        }
        Task::Fit { config } => {
            let (loaded, prepared) = load_and_prepare(config)?;
            let posterior = fit_mcmc(&prepared.model_panel(), &config.mcmc_config(jobs))?;
            let files = vec![posterior_csv(&posterior), json_file("fit_report.json", &fit_report(&prepared, &posterior))?];
            let warnings = merge(merge(loaded.warnings, prepared.warnings), posterior.diagnostics.warnings.clone());
            Ok((files, warnings))
        }
        Task::Forecast { config } => forecast(config, jobs),
    }
}

fn merge(mut a: Vec<String>, b: Vec<String>) -> Vec<String> {
    a.extend(b);
    a
}

fn load(config: &RunConfig) -> CliResult<Ingested> {
    ingest(&config.data, &config.group_overrides()?, config.model.min_population)
}

fn load_and_prepare(config: &RunConfig) -> CliResult<(Ingested, Prepared)> {
    let loaded = load(config)?;
    let prepared = prepare(&loaded.world, &config.prepare_config())?;
    Ok((loaded, prepared))
}

fn synth(settings: &SynthSettings) -> CliResult<Produced> {
    let sw = synth_world(&settings.spec())?;
    let mut files = world_files(&sw.world)?;

    let truth = &sw.truth;
    let n_t = truth.nmr_star.periods().len();
    let mut b = CsvBuilder::new(&["iso3", "period", "nmr_star", "imr_star", "omr_star", "imr", "masi", "global_masi"]);
    for (i, id) in truth.nmr_star.countries().iter().enumerate() {
        for t in 0..n_t {
            b.row([
                id.clone(),
                truth.nmr_star.periods().year(t).to_string(),
                opt_num(truth.nmr_star.get(i, t)),
                opt_num(truth.imr_star.get(i, t)),
                opt_num(truth.omr_star.get(i, t)),
                opt_num(truth.imr.get(i, t)),
                num(truth.country_masi[i * n_t + t]),
                num(truth.global_masi[t]),
            ]);
        }
    }
    files.push(b.finish("truth.csv"));

    let mut cfg = format!("seed = {}\n\n[data]\n", settings.seed);
    for (name, _) in &files {
        if let Some(role) = name.strip_suffix(".csv").filter(|r| *r != "truth") {
            cfg.push_str(&format!("{role} = \"{name}\"\n"));
        }
    }
    files.push(("config.toml".into(), cfg.into_bytes()));
    Ok((files, Vec::new()))
}

fn decomposition_csv(world: &World, p: &Prepared) -> OutputFile {
    let panels = &p.panels;
    let n_t = panels.nmr.periods().len();
    let mut b = CsvBuilder::new(&["iso3", "period", "nmr", "imr", "omr", "imr_source"]);
    for (i, id) in world.ids().iter().enumerate() {
        for t in 0..n_t {
            let source = if panels.observed_flow[i * n_t + t] { "observed" } else { "model" };
            b.row([
                id.clone(),
                panels.nmr.periods().year(t).to_string(),
                opt_num(panels.nmr.get(i, t)),
                opt_num(panels.imr.get(i, t)),
                opt_num(panels.omr.get(i, t)),
                source.into(),
            ]);
        }
    }
    b.finish("decomposition.csv")
}

fn standardized_csv(p: &Prepared) -> OutputFile {
    let panels = &p.panels;
    let periods = panels.nmr.periods();
    let mut b = CsvBuilder::new(&[
        "iso3",
        "period",
        "included",
        "at_risk",
        "masi",
        "masi_ratio",
        "global_masi",
        "global_masi_ratio",
        "nmr",
        "imr",
        "omr",
        "imr_star",
        "omr_star",
        "nmr_star",
    ]);
    for (i, id) in panels.nmr.countries().iter().enumerate() {
        for t in 0..periods.len() {
            let ratio = p.ratio(i, t);
            b.row([
                id.clone(),
                periods.year(t).to_string(),
                p.included[i].to_string(),
                num(p.at_risk.grid().total(i, t)),
                num(p.masi.country(i, t)),
                num(ratio.country),
                num(p.masi.global(t)),
                num(ratio.global),
                opt_num(panels.nmr.get(i, t)),
                opt_num(panels.imr.get(i, t)),
                opt_num(panels.omr.get(i, t)),
                opt_num(panels.imr_star.get(i, t)),
                opt_num(panels.omr_star.get(i, t)),
                opt_num(panels.nmr_star.get(i, t)),
            ]);
        }
    }
    b.finish("standardized.csv")
}

#[derive(Serialize)]
struct CountryIntercept {
    iso3: String,
    intercept: f64,
}

#[derive(Serialize)]
struct FitSummary {
    intercept: f64,
    slope: f64,
    slope_fixed: bool,
    sigma2_between: f64,
    sigma2_within: f64,
    r2_imr: f64,
    r2_omr: f64,
    n_observations: usize,
    optimizer_iterations: usize,
    variance_ratio_at_boundary: bool,
    country_intercepts: Vec<CountryIntercept>,
    warnings: Vec<String>,
}

fn fit_summary(fit: &MixedEffectsFit) -> FitSummary {
    FitSummary {
        intercept: fit.intercept,
        slope: fit.slope,
        slope_fixed: fit.slope_fixed,
        sigma2_between: fit.sigma2_between,
        sigma2_within: fit.sigma2_within,
        r2_imr: fit.diagnostics.r2_imr,
        r2_omr: fit.diagnostics.r2_omr,
        n_observations: fit.diagnostics.n_observations,
        optimizer_iterations: fit.diagnostics.iterations,
        variance_ratio_at_boundary: fit.diagnostics.at_boundary,
        country_intercepts: fit
            .countries
            .iter()
            .zip(&fit.country_intercepts)
            .map(|(c, v)| CountryIntercept {
                iso3: c.clone(),
                intercept: *v,
            })
            .collect(),
        warnings: fit.warnings.clone(),
    }
}

fn posterior_csv(post: &PosteriorSample) -> OutputFile {
    let mut b = CsvBuilder::new(&["draw", "parameter", "iso3", "value"]);
    for (d, draw) in post.draws.iter().enumerate() {
        let ds = d.to_string();
        for (name, v) in draw.hyperparameters() {
            b.row([ds.as_str(), name, "", &num(v)]);
        }
        for (i, id) in post.countries.iter().enumerate() {
            for (name, v) in [("mu", draw.mu[i]), ("phi", draw.phi[i]), ("sigma", draw.sigma[i])] {
                b.row([ds.as_str(), name, id, &num(v)]);
            }
        }
    }
    b.finish("posterior.csv")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn fit_report(p: &Prepared, post: &PosteriorSample) -> Value {
    let d = &post.diagnostics;
    let countries: Vec<Value> = post
        .countries
        .iter()
        .enumerate()
        .map(|(i, id)| {
            json!({
                "iso3": id,
                "mu_mean": mean(&post.country_values(i, |d, i| d.mu[i])),
                "phi_mean": mean(&post.country_values(i, |d, i| d.phi[i])),
                "sigma_mean": mean(&post.country_values(i, |d, i| d.sigma[i])),
            })
        })
        .collect();
    let rhat: serde_json::Map<String, Value> = d.rhat.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    json!({
        "decomposition": fit_summary(&p.fit_raw),
        "decomposition_standardized": fit_summary(&p.fit_star),
        "mcmc": {
            "draws": post.len(),
            "split_rhat": rhat,
            "max_split_rhat_mu": d.max_rhat_mu,
            "acceptance": {
                "phi": d.acceptance.phi,
                "sigma": d.acceptance.sigma,
                "phi_mean": d.acceptance.phi_mean,
                "sigma_scale": d.acceptance.sigma_scale,
            },
            "warnings": d.warnings,
        },
        "countries": countries,
    })
}

fn forecast(config: &RunConfig, jobs: Option<usize>) -> CliResult<Produced> {
    let (loaded, prepared) = load_and_prepare(config)?;
    let posterior = fit_mcmc(&prepared.model_panel(), &config.mcmc_config(jobs))?;
    let set = run_forecast(&loaded.world, &prepared, &posterior, &config.forecast_config(jobs))?;
    let table = TrajectoryTable::from_set(&set);
    let mut files = vec![
        table.trajectories_csv(),
        table.population_csv(),
        table.summary_csv("summary.csv"),
        json_file("fit_report.json", &fit_report(&prepared, &posterior))?,
    ];
    if config.forecast.age_detail {
        files.extend(age_detail(&set));
    }
    let mut warnings = merge(merge(loaded.warnings, prepared.warnings), posterior.diagnostics.warnings.clone());
    for tr in &set.trajectories {
        warnings.extend(tr.warnings.iter().map(|w| format!("trajectory {}: {w}", tr.index)));
    }
    Ok((files, warnings))
}

fn age_detail(set: &netmig_core::TrajectorySet) -> Vec<OutputFile> {
    use netmig_core::grid::Sex;
    let ages = set.ages;
    let mut pop = CsvBuilder::new(&["trajectory", "iso3", "year", "age", "sex", "value"]);
    let mut flows = CsvBuilder::new(&["trajectory", "iso3", "period", "age", "sex", "inflow", "outflow"]);
    for tr in &set.trajectories {
        let j = tr.index.to_string();
        for (i, id) in set.countries.iter().enumerate() {
            for (k, year) in tr.population.times().years().iter().enumerate() {
                for a in 0..ages.len() {
                    for s in Sex::ALL {
                        pop.row([
                            j.clone(),
                            id.clone(),
                            year.to_string(),
                            ages.lower(a).to_string(),
                            s.code().into(),
                            num(tr.population.get(i, k, a, s)),
                        ]);
                    }
                }
            }
            if let Some(f) = &tr.flows {
                for (k, year) in f.inflow.times().years().iter().enumerate() {
                    for a in 0..ages.len() {
                        for s in Sex::ALL {
                            flows.row([
                                j.clone(),
                                id.clone(),
                                year.to_string(),
                                ages.lower(a).to_string(),
                                s.code().into(),
                                num(f.inflow.get(i, k, a, s)),
                                num(f.outflow.get(i, k, a, s)),
                            ]);
                        }
                    }
                }
            }
        }
    }
    vec![pop.finish("population_by_age.csv"), flows.finish("flows_by_age.csv")]
}

fn backtest(config: &RunConfig, jobs: Option<usize>) -> CliResult<Produced> {
    let loaded = load(config)?;
    let world = &loaded.world;
    let step = PERIOD_YEARS as i32;
    let max_h = config.backtest.max_horizon;
    let first_origin = config
        .backtest
        .first_origin
        .unwrap_or(world.nmr.periods().last() - step * (max_h as i32 - 1));
    let plan = BacktestPlan::for_panel(&world.nmr, first_origin, max_h)?;
    let report = run_backtest(world, &plan, &config.backtest_config(jobs)?)?;

    let mut table = CsvBuilder::new(&[
        "horizon",
        "method",
        "n_cells",
        "mae",
        "lmae",
        "mase",
        "coverage95",
        "halfwidth95",
        "halfwidth80",
    ]);
    for r in &report.rows {
        table.row([
            r.horizon.to_string(),
            r.method.name().into(),
            r.n_cells.to_string(),
            num(r.mae),
            num(r.lmae),
            opt_num(r.mase),
            opt_num(r.coverage95),
            opt_num(r.halfwidth95),
            opt_num(r.halfwidth80),
        ]);
    }

    let mut by_country = CsvBuilder::new(&["method", "horizon", "iso3", "mae", "mase"]);
    let methods: Vec<Method> = config.methods()?;
    for &m in &methods {
        for k in plan.horizons() {
            for (id, mae, mase) in report.by_country(m, k, &world.nmr) {
                by_country.row([m.name().to_string(), k.to_string(), id, num(mae), opt_num(mase)]);
            }
        }
    }

    let mut cells = CsvBuilder::new(&[
        "method", "horizon", "origin", "target", "iso3", "forecast", "truth", "lower95", "upper95", "lower80",
        "upper80",
    ]);
    for e in &report.errors {
        let (l95, u95) = (e.interval95.map(|x| x.0), e.interval95.map(|x| x.1));
        let (l80, u80) = (e.interval80.map(|x| x.0), e.interval80.map(|x| x.1));
        cells.row([
            e.method.name().to_string(),
            e.horizon.to_string(),
            e.origin.to_string(),
            e.target.to_string(),
            e.country.clone(),
            num(e.forecast),
            num(e.truth),
            opt_num(l95),
            opt_num(u95),
            opt_num(l80),
            opt_num(u80),
        ]);
    }
    let files = vec![
        table.finish("backtest.csv"),
        by_country.finish("backtest_by_country.csv"),
        cells.finish("backtest_cells.csv"),
    ];
    Ok((files, merge(loaded.warnings, report.warnings)))
}
