//! CSV and JSON writers. Files are built in memory so they can be hashed
//! before they hit the disk.

use netmig_core::grid::{PopulationGrid, Sex};
use netmig_core::panel::RatePanel;
use netmig_core::World;

use crate::error::{CliError, CliResult};

/// Named output file contents.
pub type OutputFile = (String, Vec<u8>);

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct CsvBuilder {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvBuilder {
    pub fn new(headers: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(headers).expect("in-memory write");
        Self { writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn finish(self, name: &str) -> OutputFile {
        let bytes = self.writer.into_inner().expect("in-memory flush");
        (name.to_string(), bytes)
    }
}

pub fn json_file<T: serde::Serialize>(name: &str, value: &T) -> CliResult<OutputFile> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok((name.to_string(), bytes))
}

fn grid_rows(b: &mut CsvBuilder, grid: &PopulationGrid, value: impl Fn(usize, usize, usize, Sex) -> Vec<String>) {
    for (i, id) in grid.countries().iter().enumerate() {
        for (t, year) in grid.times().years().iter().enumerate() {
            for a in 0..grid.ages().len() {
                for s in Sex::ALL {
                    let mut row = vec![id.clone(), year.to_string(), grid.ages().lower(a).to_string(), s.code().into()];
                    row.extend(value(i, t, a, s));
                    b.row(row);
                }
            }
        }
    }
}

fn rate_file(name: &str, column: &str, panel: &RatePanel) -> OutputFile {
    let mut b = CsvBuilder::new(&["iso3", "period", column, "units"]);
    for (i, t, v) in panel.observed() {
        b.row([
            panel.countries()[i].clone(),
            panel.periods().year(t).to_string(),
            num(v),
            "per1000_annual".into(),
        ]);
    }
    b.finish(name)
}

/// The input files describing `world`, in the ingest schema.
pub fn world_files(world: &World) -> CliResult<Vec<OutputFile>> {
    let mut out = Vec::new();

    let mut b = CsvBuilder::new(&["iso3", "region", "group"]);
    for c in &world.countries {
        b.row([c.iso3.as_str(), c.region.as_str(), c.group.name()]);
    }
    out.push(b.finish("countries.csv"));

    let mut b = CsvBuilder::new(&["iso3", "year", "age", "sex", "value"]);
    let pop = &world.population;
    grid_rows(&mut b, pop, |i, t, a, s| vec![num(pop.get(i, t, a, s))]);
    out.push(b.finish("population.csv"));

    out.push(rate_file("nmr.csv", "value", &world.nmr));
    if let Some(imr) = &world.imr {
        out.push(rate_file("flows.csv", "imr", imr));
    }
    if let Some(flows) = &world.age_flows {
        let mut b = CsvBuilder::new(&["iso3", "period", "age", "sex", "inflow", "outflow"]);
        grid_rows(&mut b, &flows.inflow, |i, t, a, s| {
            vec![num(flows.inflow.get(i, t, a, s)), num(flows.outflow.get(i, t, a, s))]
        });
        out.push(b.finish("flows_by_age.csv"));
    }

    let vitals = &world.vitals;
    let ages = vitals.ages();
    let mut v = CsvBuilder::new(&["iso3", "period", "age", "sex", "survival", "fertility"]);
    let mut births = CsvBuilder::new(&[
        "iso3",
        "period",
        "sex_ratio_at_birth",
        "birth_survival_male",
        "birth_survival_female",
    ]);
    for id in vitals.countries() {
        for &year in vitals.periods().years() {
            let view = vitals.view(id, year)?;
            for a in 0..ages.len() {
                for s in Sex::ALL {
                    let f = if s == Sex::Female { view.fertility[a] } else { 0.0 };
                    v.row([
                        id.clone(),
                        year.to_string(),
                        ages.lower(a).to_string(),
                        s.code().into(),
                        num(view.survival(a, s)),
                        num(f),
                    ]);
                }
            }
            births.row([
                id.clone(),
                year.to_string(),
                num(view.sex_ratio_at_birth),
                num(view.birth_survival[0]),
                num(view.birth_survival[1]),
            ]);
        }
    }
    out.push(v.finish("vitals.csv"));
    out.push(births.finish("births.csv"));

    let mut b = CsvBuilder::new(&["age", "weight"]);
    for (a, w) in world.schedule.weights().iter().enumerate() {
        b.row([ages.lower(a).to_string(), num(*w)]);
    }
    out.push(b.finish("schedule.csv"));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn numbers_round_trip_through_text(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn missing_values_are_empty_fields() {
        let mut b = CsvBuilder::new(&["a", "b"]);
        b.row([opt_num(None), opt_num(Some(0.5))]);
        let (_, bytes) = b.finish("x.csv");
        assert_eq!(String::from_utf8(bytes).unwrap(), "a,b\n,0.5\n");
    }
}
