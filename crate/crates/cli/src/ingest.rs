//! CSV ingestion into the in-memory model.
//!
//! Every file is headered UTF-8. Schema problems are reported with the file
//! name, the 1-based line number and the column.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use netmig_core::country::CountryGroup;
use netmig_core::grid::{AgeGrid, PeriodAxis, PopulationGrid, Sex};
use netmig_core::panel::{RateKind, RatePanel};
use netmig_core::world::AgeFlows;
use netmig_core::{AgeSchedule, CountryMeta, VitalRates, World, PERIOD_YEARS};

use crate::config::DataPaths;
use crate::error::{CliError, CliResult};

/// Rate units accepted in the `units` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    /// Annual migrants per thousand at-risk persons.
    Per1000Annual,
    /// Migrants over the whole five-year period per thousand.
    Per1000Period,
}

impl Units {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "per1000_annual" => Some(Units::Per1000Annual),
            "per1000_period" => Some(Units::Per1000Period),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Units::Per1000Annual => "per1000_annual",
            Units::Per1000Period => "per1000_period",
        }
    }

    fn to_annual(self, v: f64) -> f64 {
        match self {
            Units::Per1000Annual => v,
            Units::Per1000Period => v / PERIOD_YEARS,
        }
    }
}

/// A parsed file: header positions plus records with their line numbers.
pub struct Table {
    name: String,
    columns: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

pub struct Row<'a> {
    table: &'a Table,
    line: u64,
    record: &'a csv::StringRecord,
}

impl Table {
    pub fn read(path: &Path, required: &[&str]) -> CliResult<Self> {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::validation(format!("cannot open {}: {e}", path.display())))?;
        Self::from_reader(&name, file, required)
    }

    pub fn from_reader<R: std::io::Read>(name: &str, reader: R, required: &[&str]) -> CliResult<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| CliError::validation(format!("{name}: unreadable header: {e}")))?
            .clone();
        let columns: HashMap<String, usize> =
            headers.iter().enumerate().filter(|(_, h)| !h.is_empty()).map(|(k, h)| (h.to_string(), k)).collect();
        let missing: Vec<&str> = required.iter().copied().filter(|c| !columns.contains_key(*c)).collect();
        if !missing.is_empty() {
            return Err(CliError::validation(format!("{name}: missing columns: {}", missing.join(", "))));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                CliError::validation(format!("{name}:{line}: {e}"))
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            rows.push((line, rec));
        }
        if rows.is_empty() {
            return Err(CliError::validation(format!("{name}: no data rows")));
        }
        Ok(Self {
            name: name.to_string(),
            columns,
            rows,
        })
    }

    pub fn has(&self, column: &str) -> bool {
        self.columns.contains_key(column)
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.rows.iter().map(move |(line, record)| Row {
            table: self,
            line: *line,
            record,
        })
    }
}

impl Row<'_> {
    pub fn error(&self, column: &str, msg: impl std::fmt::Display) -> CliError {
        CliError::validation(format!("{}:{}: column `{column}`: {msg}", self.table.name, self.line))
    }

    pub fn str(&self, column: &str) -> CliResult<&str> {
        let k = self.table.columns[column];
        match self.record.get(k) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(self.error(column, "empty value")),
        }
    }

    pub fn opt_str(&self, column: &str) -> Option<&str> {
        let k = *self.table.columns.get(column)?;
        self.record.get(k).filter(|v| !v.is_empty())
    }

    pub fn f64(&self, column: &str) -> CliResult<f64> {
        let s = self.str(column)?;
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.error(column, format!("`{s}` is not a finite number"))),
        }
    }

    pub fn opt_f64(&self, column: &str) -> CliResult<Option<f64>> {
        match self.opt_str(column) {
            None => Ok(None),
            Some(_) => self.f64(column).map(Some),
        }
    }

    pub fn nonneg(&self, column: &str) -> CliResult<f64> {
        let v = self.f64(column)?;
        if v < 0.0 {
            return Err(self.error(column, format!("negative value {v}")));
        }
        Ok(v)
    }

    pub fn i32(&self, column: &str) -> CliResult<i32> {
        let s = self.str(column)?;
        s.parse().map_err(|_| self.error(column, format!("`{s}` is not an integer")))
    }

    pub fn u32(&self, column: &str) -> CliResult<u32> {
        let s = self.str(column)?;
        s.parse().map_err(|_| self.error(column, format!("`{s}` is not a nonnegative integer")))
    }

    pub fn sex(&self, column: &str) -> CliResult<Sex> {
        let s = self.str(column)?;
        Sex::from_code(s).ok_or_else(|| self.error(column, format!("unknown sex `{s}` (expected M or F)")))
    }

    pub fn country(&self, column: &str, index: &HashMap<String, usize>) -> CliResult<usize> {
        let s = self.str(column)?;
        index
            .get(s)
            .copied()
            .ok_or_else(|| self.error(column, format!("unknown country code `{s}`")))
    }

    pub fn units(&self) -> CliResult<Units> {
        let s = self.str("units")?;
        Units::parse(s)
            .ok_or_else(|| self.error("units", format!("unknown units `{s}` (per1000_annual or per1000_period)")))
    }
}

/// Everything loaded for a run, plus advisory warnings.
pub struct Ingested {
    pub world: World,
    pub warnings: Vec<String>,
}

pub fn read_countries(path: &Path, overrides: &[(String, CountryGroup)]) -> CliResult<Vec<CountryMeta>> {
    let table = Table::read(path, &["iso3", "region"])?;
    let mut out: Vec<CountryMeta> = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for row in table.rows() {
        let iso3 = row.str("iso3")?;
        if let Some(first) = seen.insert(iso3.to_string(), row.line) {
            return Err(row.error("iso3", format!("duplicate country `{iso3}` (first on line {first})")));
        }
        let mut meta = CountryMeta::new(iso3, row.opt_str("region").unwrap_or(""));
        if let Some(g) = row.opt_str("group") {
            let group = CountryGroup::from_name(g)
                .ok_or_else(|| row.error("group", format!("unknown group `{g}` (GCC, GCC_LABOR_ORIGIN, OTHER)")))?;
            meta = meta.with_group(group);
        }
        out.push(meta);
    }
    for (code, group) in overrides {
        let meta = out
            .iter_mut()
            .find(|m| &m.iso3 == code)
            .ok_or_else(|| CliError::validation(format!("group override names unknown country `{code}`")))?;
        meta.group = *group;
    }
    Ok(out)
}

fn country_index(countries: &[CountryMeta]) -> HashMap<String, usize> {
    countries.iter().enumerate().map(|(i, c)| (c.iso3.clone(), i)).collect()
}

fn axis(file: &str, what: &str, years: &BTreeSet<i32>) -> CliResult<PeriodAxis> {
    PeriodAxis::new(years.iter().copied().collect())
        .map_err(|e| CliError::validation(format!("{file}: {what}: {e}")))
}

/// Age- and sex-resolved counts keyed by `(iso3, year, age, sex)` columns.
/// `years` fixes the time axis when given; otherwise it is read from the
/// file. Every cell must appear exactly once.
fn read_age_sex_grids(
    path: &Path,
    year_column: &str,
    value_columns: &[&str],
    countries: &[CountryMeta],
    ages: Option<AgeGrid>,
) -> CliResult<(PeriodAxis, AgeGrid, Vec<PopulationGrid>)> {
    let mut required = vec!["iso3", year_column, "age", "sex"];
    required.extend_from_slice(value_columns);
    let table = Table::read(path, &required)?;
    let index = country_index(countries);
    let mut years = BTreeSet::new();
    let mut lowers = BTreeSet::new();
    for row in table.rows() {
        row.country("iso3", &index)?;
        years.insert(row.i32(year_column)?);
        let lower = row.u32("age")?;
        if lower % AgeGrid::GROUP_WIDTH != 0 {
            return Err(row.error("age", format!("{lower} is not a multiple of 5")));
        }
        lowers.insert(lower);
    }
    let times = axis(&table.name, year_column, &years)?;
    let ages = match ages {
        Some(a) => a,
        None => {
            let bounds: Vec<u32> = lowers.iter().copied().collect();
            AgeGrid::from_lower_bounds(&bounds)
                .map_err(|e| CliError::validation(format!("{}: age: {e}", table.name)))?
        }
    };
    let ids: Vec<String> = countries.iter().map(|c| c.iso3.clone()).collect();
    let n_cells = ids.len() * times.len() * ages.len() * 2;
    let mut values = vec![vec![0.0; n_cells]; value_columns.len()];
    let mut filled: Vec<Option<u64>> = vec![None; n_cells];
    for row in table.rows() {
        let i = row.country("iso3", &index)?;
        let t = times.index_of(row.i32(year_column)?).expect("year collected above");
        let lower = row.u32("age")?;
        let a = ages
            .index_of(lower)
            .ok_or_else(|| row.error("age", format!("age {lower} is outside the {}-group grid", ages.len())))?;
        let s = row.sex("sex")?;
        let k = ((i * times.len() + t) * ages.len() + a) * 2 + s as usize;
        if let Some(first) = filled[k] {
            return Err(row.error("iso3", format!("duplicate cell (first on line {first})")));
        }
        filled[k] = Some(row.line);
        for (v, col) in values.iter_mut().zip(value_columns) {
            v[k] = row.nonneg(col)?;
        }
    }
    if let Some(k) = filled.iter().position(Option::is_none) {
        let s = k % 2;
        let a = (k / 2) % ages.len();
        let t = (k / 2 / ages.len()) % times.len();
        let i = k / 2 / ages.len() / times.len();
        return Err(CliError::validation(format!(
            "{}: missing row for {} {} age {} sex {}",
            table.name,
            ids[i],
            times.year(t),
            ages.lower(a),
            Sex::ALL[s].code()
        )));
    }
    let grids = values
        .into_iter()
        .map(|v| PopulationGrid::from_values(ids.clone(), times.clone(), ages, v))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((times, ages, grids))
}

/// Rate panel from `(iso3, period, <value>, units)` rows. Every row of a file
/// must use the same units.
fn read_rates(
    path: &Path,
    value_column: &str,
    kind: RateKind,
    countries: &[CountryMeta],
    periods: Option<&PeriodAxis>,
) -> CliResult<RatePanel> {
    let table = Table::read(path, &["iso3", "period", value_column, "units"])?;
    let index = country_index(countries);
    let periods = match periods {
        Some(p) => p.clone(),
        None => {
            let mut years = BTreeSet::new();
            for row in table.rows() {
                years.insert(row.i32("period")?);
            }
            axis(&table.name, "period", &years)?
        }
    };
    let ids: Vec<String> = countries.iter().map(|c| c.iso3.clone()).collect();
    let mut panel = RatePanel::empty(kind, ids, periods.clone());
    let mut lines: HashMap<(usize, usize), u64> = HashMap::new();
    let mut units: Option<(Units, u64)> = None;
    for row in table.rows() {
        let i = row.country("iso3", &index)?;
        let year = row.i32("period")?;
        let t = periods
            .index_of(year)
            .ok_or_else(|| row.error("period", format!("period {year} is not on the NMR period axis")))?;
        let u = row.units()?;
        match units {
            None => units = Some((u, row.line)),
            Some((first, line)) if first != u => {
                return Err(row.error(
                    "units",
                    format!("unit mismatch: `{}` here, `{}` on line {line}", u.name(), first.name()),
                ))
            }
            Some(_) => {}
        }
        if let Some(first) = lines.insert((i, t), row.line) {
            return Err(row.error("period", format!("duplicate ({}, {year}) row (first on line {first})", countries[i].iso3)));
        }
        let v = if kind.is_gross() {
            row.nonneg(value_column)?
        } else {
            row.f64(value_column)?
        };
        panel.set(i, t, Some(u.to_annual(v)));
    }
    Ok(panel)
}

/// Observed in-migration may be missing only before the first flow period
/// in the file.
fn check_flow_coverage(panel: &RatePanel) -> CliResult<()> {
    let first = (0..panel.periods().len()).find(|&t| (0..panel.n_countries()).any(|i| panel.get(i, t).is_some()));
    let Some(first) = first else { return Ok(()) };
    for i in 0..panel.n_countries() {
        for t in first..panel.periods().len() {
            if panel.get(i, t).is_none() {
                return Err(CliError::validation(format!(
                    "flows: missing in-migration rate for {} in {}; gaps are allowed only before {}",
                    panel.countries()[i],
                    panel.periods().year(t),
                    panel.periods().year(first)
                )));
            }
        }
    }
    Ok(())
}

fn read_vitals(vitals: &Path, births: &Path, countries: &[CountryMeta], ages: AgeGrid) -> CliResult<VitalRates> {
    let table = Table::read(vitals, &["iso3", "period", "age", "sex", "survival", "fertility"])?;
    let index = country_index(countries);
    let mut years = BTreeSet::new();
    for row in table.rows() {
        row.country("iso3", &index)?;
        years.insert(row.i32("period")?);
    }
    let periods = axis(&table.name, "period", &years)?;
    let ids: Vec<String> = countries.iter().map(|c| c.iso3.clone()).collect();
    let mut rates = VitalRates::constant(ids.clone(), periods.clone(), ages, 1.0, 0.0, 1.0)?;
    let n_a = ages.len();
    let mut seen: HashMap<(usize, usize, usize, usize), u64> = HashMap::new();
    for row in table.rows() {
        let i = row.country("iso3", &index)?;
        let t = periods.index_of(row.i32("period")?).expect("collected above");
        let lower = row.u32("age")?;
        let a = ages
            .index_of(lower)
            .ok_or_else(|| row.error("age", format!("age {lower} is not on the population age grid")))?;
        let s = row.sex("sex")?;
        if let Some(first) = seen.insert((i, t, a, s as usize), row.line) {
            return Err(row.error("iso3", format!("duplicate cell (first on line {first})")));
        }
        let survival = row.f64("survival")?;
        if !(survival > 0.0 && survival <= 1.0) {
            return Err(row.error("survival", format!("{survival} is outside (0, 1]")));
        }
        let fertility = row.opt_f64("fertility")?.unwrap_or(0.0);
        if fertility < 0.0 {
            return Err(row.error("fertility", format!("negative value {fertility}")));
        }
        if s == Sex::Male && fertility != 0.0 {
            return Err(row.error("fertility", "fertility is given on female rows only"));
        }
        let (surv, fert, _, _) = rates.cell_mut(i, t);
        surv[2 * a + s as usize] = survival;
        if s == Sex::Female {
            fert[a] = fertility;
        }
    }
    let expected = ids.len() * periods.len() * n_a * 2;
    if seen.len() != expected {
        return Err(CliError::validation(format!(
            "{}: {} of {expected} (country, period, age, sex) cells present",
            table.name,
            seen.len()
        )));
    }

    let table = Table::read(
        births,
        &["iso3", "period", "sex_ratio_at_birth", "birth_survival_male", "birth_survival_female"],
    )?;
    let mut seen: HashMap<(usize, usize), u64> = HashMap::new();
    for row in table.rows() {
        let i = row.country("iso3", &index)?;
        let year = row.i32("period")?;
        let t = periods
            .index_of(year)
            .ok_or_else(|| row.error("period", format!("period {year} has no vital rates")))?;
        if let Some(first) = seen.insert((i, t), row.line) {
            return Err(row.error("period", format!("duplicate ({}, {year}) row (first on line {first})", ids[i])));
        }
        let srb = row.f64("sex_ratio_at_birth")?;
        if !(srb > 0.0) {
            return Err(row.error("sex_ratio_at_birth", "must be positive"));
        }
        let (_, _, birth_survival, ratio) = rates.cell_mut(i, t);
        for (s, col) in ["birth_survival_male", "birth_survival_female"].into_iter().enumerate() {
            let v = row.f64(col)?;
            if !(v > 0.0 && v <= 1.0) {
                return Err(row.error(col, format!("{v} is outside (0, 1]")));
            }
            birth_survival[s] = v;
        }
        *ratio = srb;
    }
    if seen.len() != ids.len() * periods.len() {
        return Err(CliError::validation(format!(
            "{}: {} of {} (country, period) rows present",
            table.name,
            seen.len(),
            ids.len() * periods.len()
        )));
    }
    Ok(rates)
}

fn read_schedule(path: &Path, ages: AgeGrid) -> CliResult<AgeSchedule> {
    let table = Table::read(path, &["age", "weight"])?;
    let mut weights: Vec<Option<f64>> = vec![None; ages.len()];
    for row in table.rows() {
        let lower = row.u32("age")?;
        let a = ages
            .index_of(lower)
            .ok_or_else(|| row.error("age", format!("age {lower} is not on the population age grid")))?;
        if weights[a].is_some() {
            return Err(row.error("age", format!("duplicate age {lower}")));
        }
        weights[a] = Some(row.nonneg("weight")?);
    }
    let weights: Vec<f64> = weights
        .into_iter()
        .enumerate()
        .map(|(a, w)| w.ok_or_else(|| CliError::validation(format!("schedule: missing age {}", ages.lower(a)))))
        .collect::<CliResult<_>>()?;
    Ok(AgeSchedule::from_weights(&weights)?)
}

/// Load and validate every configured file.
pub fn ingest(paths: &DataPaths, overrides: &[(String, CountryGroup)], min_population: f64) -> CliResult<Ingested> {
    let countries = read_countries(&paths.countries, overrides)?;
    let (_, ages, mut grids) = read_age_sex_grids(&paths.population, "year", &["value"], &countries, None)?;
    let population = grids.remove(0);
    let nmr = read_rates(&paths.nmr, "value", RateKind::Nmr, &countries, None)?;
    let imr = match &paths.flows {
        Some(p) => {
            let panel = read_rates(p, "imr", RateKind::Imr, &countries, Some(nmr.periods()))?;
            check_flow_coverage(&panel)?;
            Some(panel)
        }
        None => None,
    };
    let age_flows = match &paths.flows_by_age {
        Some(p) => {
            let (times, _, mut g) =
                read_age_sex_grids(p, "period", &["inflow", "outflow"], &countries, Some(ages))?;
            if let Some(&y) = times.years().iter().find(|y| nmr.periods().index_of(**y).is_none()) {
                return Err(CliError::validation(format!("flows_by_age: period {y} is not on the NMR period axis")));
            }
            let outflow = g.remove(1);
            let inflow = g.remove(0);
            Some(AgeFlows { inflow, outflow })
        }
        None => None,
    };
    let vitals = read_vitals(&paths.vitals, &paths.births, &countries, ages)?;
    let schedule = match &paths.schedule {
        Some(p) => read_schedule(p, ages)?,
        None => AgeSchedule::default_for(ages),
    };
    let world = World {
        countries,
        population,
        nmr,
        imr,
        age_flows,
        vitals,
        schedule,
    };
    world.validate()?;

    let mut warnings = Vec::new();
    let last = world.population.times().len() - 1;
    for (i, c) in world.countries.iter().enumerate() {
        let total = world.population.total(i, last);
        if total < min_population {
            warnings.push(format!(
                "{} has {total} persons in {}, below the {min_population} threshold; carried without migration",
                c.iso3,
                world.last_year()
            ));
        }
    }
    Ok(Ingested { world, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str, required: &[&str]) -> CliResult<Table> {
        Table::from_reader("t.csv", text.as_bytes(), required)
    }

    fn message(r: CliResult<impl Sized>) -> String {
        match r {
            Err(CliError::Validation(m)) => m,
            Err(e) => panic!("wrong error class: {e}"),
            Ok(_) => panic!("expected an error"),
        }
    }

    #[test]
    fn empty_file_names_every_missing_column() {
        let m = message(table("", &["iso3", "period", "value", "units"]));
        assert!(m.contains("missing columns: iso3, period, value, units"), "{m}");
    }

    #[test]
    fn header_only_file_has_no_rows() {
        let m = message(table("iso3,region\n", &["iso3", "region"]));
        assert!(m.contains("no data rows"), "{m}");
    }

    #[test]
    fn bad_cells_report_line_and_column() {
        let t = table("iso3,value\nAAA,1.5\nBBB,x\n", &["iso3", "value"]).unwrap();
        let rows: Vec<Row> = t.rows().collect();
        assert_eq!(rows[0].f64("value").unwrap(), 1.5);
        let m = message(rows[1].f64("value"));
        assert!(m.starts_with("t.csv:3: column `value`"), "{m}");
    }

    #[test]
    fn units_convert_to_annual() {
        assert_eq!(Units::parse("per1000_period").unwrap().to_annual(10.0), 2.0);
        assert_eq!(Units::parse("per1000_annual").unwrap().to_annual(10.0), 10.0);
        assert!(Units::parse("percent").is_none());
    }

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn two_countries() -> Vec<CountryMeta> {
        vec![CountryMeta::new("AAA", "x"), CountryMeta::new("BBB", "x")]
    }

    #[test]
    fn duplicate_country_period_is_a_hard_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "nmr.csv",
            "iso3,period,value,units\nAAA,1990,1,per1000_annual\nBBB,1990,2,per1000_annual\nAAA,1990,3,per1000_annual\n",
        );
        let m = message(read_rates(&p, "value", RateKind::Nmr, &two_countries(), None));
        assert!(m.contains("nmr.csv:4") && m.contains("duplicate") && m.contains("line 2"), "{m}");
    }

    #[test]
    fn mixed_units_are_a_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "nmr.csv",
            "iso3,period,value,units\nAAA,1990,1,per1000_annual\nBBB,1990,2,per1000_period\n",
        );
        let m = message(read_rates(&p, "value", RateKind::Nmr, &two_countries(), None));
        assert!(m.contains("unit mismatch"), "{m}");
    }

    #[test]
    fn unknown_country_codes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "nmr.csv", "iso3,period,value,units\nZZZ,1990,1,per1000_annual\n");
        let m = message(read_rates(&p, "value", RateKind::Nmr, &two_countries(), None));
        assert!(m.contains("unknown country code `ZZZ`"), "{m}");
    }

    #[test]
    fn negative_population_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "population.csv",
            "iso3,year,age,sex,value\nAAA,1990,0,M,10\nAAA,1990,0,F,-1\nAAA,1990,5,M,1\nAAA,1990,5,F,1\n",
        );
        let m = message(read_age_sex_grids(&p, "year", &["value"], &two_countries()[..1], None));
        assert!(m.contains("population.csv:3") && m.contains("negative"), "{m}");
    }

    #[test]
    fn missing_grid_cells_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "population.csv",
            "iso3,year,age,sex,value\nAAA,1990,0,M,10\nAAA,1990,0,F,10\nAAA,1990,5,M,10\n",
        );
        let m = message(read_age_sex_grids(&p, "year", &["value"], &two_countries()[..1], None));
        assert!(m.contains("missing row for AAA 1990 age 5 sex F"), "{m}");
    }

    #[test]
    fn flow_gaps_are_allowed_only_before_the_first_flow_period() {
        let ids = vec!["AAA".to_string(), "BBB".to_string()];
        let mut panel = RatePanel::empty(RateKind::Imr, ids, PeriodAxis::uniform(1980, 3));
        panel.set(0, 1, Some(1.0));
        panel.set(0, 2, Some(1.0));
        panel.set(1, 1, Some(1.0));
        panel.set(1, 2, Some(1.0));
        assert!(check_flow_coverage(&panel).is_ok());
        panel.set(1, 2, None);
        let m = message(check_flow_coverage(&panel));
        assert!(m.contains("BBB in 1990"), "{m}");
    }

    #[test]
    fn group_column_and_overrides_apply() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "countries.csv", "iso3,region,group\nQAT,Asia,\nAAA,x,GCC\nIND,Asia,\n");
        let c = read_countries(&p, &[("IND".into(), CountryGroup::Other)]).unwrap();
        assert_eq!(c[0].group, CountryGroup::Gcc);
        assert_eq!(c[1].group, CountryGroup::Gcc);
        assert_eq!(c[2].group, CountryGroup::Other);
        assert!(read_countries(&p, &[("XXX".into(), CountryGroup::Gcc)]).is_err());
    }
}
