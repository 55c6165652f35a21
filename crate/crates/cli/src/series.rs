//! Flat trajectory tables and their quantile summaries.
//!
//! `forecast` builds the table from memory and `report` from the emitted
//! CSVs; both summarize through the same code, so the two summaries agree
//! byte for byte.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use netmig_core::quantile::quantiles;
use netmig_core::TrajectorySet;

use crate::emit::{num, CsvBuilder, OutputFile};
use crate::error::{CliError, CliResult};
use crate::ingest::Table;

/// Per-period columns of `trajectories.csv`, after the key columns.
pub const RECORD_COLUMNS: [&str; 9] = [
    "at_risk",
    "inflow",
    "outflow",
    "net",
    "nmr",
    "nmr_star",
    "masi_ratio",
    "global_masi_ratio",
    "clamped",
];

/// Series summarized by `summary.csv` / `report.csv`: record column index or
/// `None` for total population.
const SUMMARY_SERIES: [(&str, Option<usize>); 5] = [
    ("masi_ratio", Some(6)),
    ("nmr", Some(4)),
    ("nmr_star", Some(5)),
    ("net", Some(3)),
    ("population", None),
];

/// Probabilities of the summary columns: median, 80% and 95% central
/// intervals.
const SUMMARY_PROBS: [f64; 5] = [0.5, 0.1, 0.9, 0.025, 0.975];

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub countries: Vec<String>,
    /// Forecast period start years; population snapshots add one more.
    pub periods: Vec<i32>,
    pub draws: Vec<usize>,
    /// `records[(j * n_countries + i) * horizon + k]`
    pub records: Vec<[f64; 9]>,
    /// `population[(j * n_countries + i) * (horizon + 1) + k]`
    pub population: Vec<f64>,
}

impl TrajectoryTable {
    pub fn from_set(set: &TrajectorySet) -> Self {
        let n = set.countries.len();
        let h = set.periods.len();
        let mut records = Vec::with_capacity(set.len() * n * h);
        let mut population = Vec::with_capacity(set.len() * n * (h + 1));
        for tr in &set.trajectories {
            for i in 0..n {
                for k in 0..h {
                    let r = tr.record(i, k);
                    records.push([
                        r.at_risk,
                        r.inflow,
                        r.outflow,
                        r.net,
                        r.nmr,
                        r.nmr_star,
                        r.masi_ratio,
                        r.global_masi_ratio,
                        r.clamped,
                    ]);
                }
                for k in 0..=h {
                    population.push(tr.population.total(i, k));
                }
            }
        }
        Self {
            countries: set.countries.clone(),
            periods: set.periods.years().to_vec(),
            draws: set.trajectories.iter().map(|t| t.draw).collect(),
            records,
            population,
        }
    }

    pub fn n_trajectories(&self) -> usize {
        self.draws.len()
    }

    fn horizon(&self) -> usize {
        self.periods.len()
    }

    fn snapshot_year(&self, k: usize) -> i32 {
        self.periods[0] + 5 * k as i32
    }

    pub fn trajectories_csv(&self) -> OutputFile {
        let mut header = vec!["trajectory", "draw", "iso3", "period"];
        header.extend(RECORD_COLUMNS);
        let mut b = CsvBuilder::new(&header);
        let (n, h) = (self.countries.len(), self.horizon());
        for (j, draw) in self.draws.iter().enumerate() {
            for (i, id) in self.countries.iter().enumerate() {
                for k in 0..h {
                    let mut row = vec![j.to_string(), draw.to_string(), id.clone(), self.periods[k].to_string()];
                    row.extend(self.records[(j * n + i) * h + k].iter().map(|v| num(*v)));
                    b.row(row);
                }
            }
        }
        b.finish("trajectories.csv")
    }

    pub fn population_csv(&self) -> OutputFile {
        let mut b = CsvBuilder::new(&["trajectory", "iso3", "year", "population"]);
        let (n, h) = (self.countries.len(), self.horizon());
        for j in 0..self.n_trajectories() {
            for (i, id) in self.countries.iter().enumerate() {
                for k in 0..=h {
                    b.row([
                        j.to_string(),
                        id.clone(),
                        self.snapshot_year(k).to_string(),
                        num(self.population[(j * n + i) * (h + 1) + k]),
                    ]);
                }
            }
        }
        b.finish("population.csv")
    }

    /// Read back `trajectories.csv` and `population.csv` from a forecast
    /// output directory.
    pub fn read(dir: &Path) -> CliResult<Self> {
        let mut required = vec!["trajectory", "draw", "iso3", "period"];
        required.extend(RECORD_COLUMNS);
        let traj = Table::read(&dir.join("trajectories.csv"), &required)?;

        let mut countries: Vec<String> = Vec::new();
        let mut country_index: HashMap<String, usize> = HashMap::new();
        let mut periods = BTreeSet::new();
        let mut n_traj = 0;
        for row in traj.rows() {
            let id = row.str("iso3")?;
            if !country_index.contains_key(id) {
                country_index.insert(id.to_string(), countries.len());
                countries.push(id.to_string());
            }
            periods.insert(row.i32("period")?);
            n_traj = n_traj.max(row.u32("trajectory")? as usize + 1);
        }
        let periods: Vec<i32> = periods.into_iter().collect();
        let (n, h) = (countries.len(), periods.len());
        let period_index: HashMap<i32, usize> = periods.iter().enumerate().map(|(k, &y)| (y, k)).collect();

        let mut draws = vec![usize::MAX; n_traj];
        let mut records = vec![[f64::NAN; 9]; n_traj * n * h];
        let mut seen = vec![false; records.len()];
        for row in traj.rows() {
            let j = row.u32("trajectory")? as usize;
            let i = country_index[row.str("iso3")?];
            let k = period_index[&row.i32("period")?];
            let slot = (j * n + i) * h + k;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(row.error("trajectory", "duplicate (trajectory, country, period) row"));
            }
            draws[j] = row.u32("draw")? as usize;
            for (c, col) in RECORD_COLUMNS.iter().enumerate() {
                records[slot][c] = row.f64(col)?;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(CliError::validation("trajectories.csv: incomplete (trajectory, country, period) grid"));
        }

        let pop = Table::read(&dir.join("population.csv"), &["trajectory", "iso3", "year", "population"])?;
        let mut population = vec![f64::NAN; n_traj * n * (h + 1)];
        let mut seen = vec![false; population.len()];
        for row in pop.rows() {
            let j = row.u32("trajectory")? as usize;
            let i = row.country("iso3", &country_index)?;
            let year = row.i32("year")?;
            let offset = year - periods[0];
            if j >= n_traj || offset < 0 || offset % 5 != 0 || offset / 5 > h as i32 {
                return Err(row.error("year", "row outside the trajectory grid"));
            }
            let slot = (j * n + i) * (h + 1) + (offset / 5) as usize;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(row.error("trajectory", "duplicate (trajectory, country, year) row"));
            }
            population[slot] = row.nonneg("population")?;
        }
        if seen.iter().any(|s| !s) {
            return Err(CliError::validation("population.csv: incomplete (trajectory, country, year) grid"));
        }
        Ok(Self {
            countries,
            periods,
            draws,
            records,
            population,
        })
    }

    /// Median and 80%/95% central intervals per country, series and year.
    pub fn summary_csv(&self, name: &str) -> OutputFile {
        let mut b = CsvBuilder::new(&["iso3", "series", "year", "median", "lower80", "upper80", "lower95", "upper95"]);
        let (n, h) = (self.countries.len(), self.horizon());
        let n_traj = self.n_trajectories();
        for (i, id) in self.countries.iter().enumerate() {
            for (series, column) in SUMMARY_SERIES {
                let steps = if column.is_some() { h } else { h + 1 };
                for k in 0..steps {
                    let values: Vec<f64> = (0..n_traj)
                        .map(|j| match column {
                            Some(c) => self.records[(j * n + i) * h + k][c],
                            None => self.population[(j * n + i) * (h + 1) + k],
                        })
                        .collect();
                    let year = if column.is_some() { self.periods[k] } else { self.snapshot_year(k) };
                    let q = quantiles(&values, &SUMMARY_PROBS);
                    let mut row = vec![id.clone(), series.to_string(), year.to_string()];
                    row.extend(q.iter().map(|v| num(*v)));
                    b.row(row);
                }
            }
        }
        b.finish(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> TrajectoryTable {
        let n_traj = 3;
        let (n, h) = (2, 2);
        let records = (0..n_traj * n * h)
            .map(|s| {
                let mut r = [0.0; 9];
                for (c, v) in r.iter_mut().enumerate() {
                    *v = (s * 10 + c) as f64 / 7.0 - 3.0;
                }
                r
            })
            .collect();
        let population = (0..n_traj * n * (h + 1)).map(|s| 1e6 + s as f64 / 3.0).collect();
        TrajectoryTable {
            countries: vec!["BBB".into(), "AAA".into()],
            periods: vec![2020, 2025],
            draws: vec![4, 0, 2],
            records,
            population,
        }
    }

    #[test]
    fn csv_files_read_back_identically() {
        let dir = tempfile::tempdir().unwrap();
        let t = table();
        for (name, bytes) in [t.trajectories_csv(), t.population_csv()] {
            std::fs::write(dir.path().join(name), bytes).unwrap();
        }
        let back = TrajectoryTable::read(dir.path()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.summary_csv("s.csv"), t.summary_csv("s.csv"));
    }

    #[test]
    fn summary_has_one_row_per_country_series_and_year() {
        let (_, bytes) = table().summary_csv("s.csv");
        let text = String::from_utf8(bytes).unwrap();
        // 2 countries × (4 rate series × 2 periods + 3 population snapshots)
        assert_eq!(text.lines().count(), 1 + 2 * (4 * 2 + 3));
        assert!(text.lines().nth(1).unwrap().starts_with("BBB,masi_ratio,2020,"));
    }

    #[test]
    fn truncated_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let t = table();
        let (name, bytes) = t.trajectories_csv();
        let text = String::from_utf8(bytes).unwrap();
        let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        std::fs::write(dir.path().join(name), cut).unwrap();
        let (name, bytes) = t.population_csv();
        std::fs::write(dir.path().join(name), bytes).unwrap();
        assert!(TrajectoryTable::read(dir.path()).is_err());
    }
}
