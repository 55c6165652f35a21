//! Index spaces and the people-count grid shared by every stage.

use crate::error::{Error, Result};
use crate::PERIOD_YEARS;

/// Five-year age groups with lower bounds 0, 5, 10, ... and an open top group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgeGrid {
    n_groups: usize,
}

impl AgeGrid {
    pub const GROUP_WIDTH: u32 = 5;

    pub fn new(n_groups: usize) -> Result<Self> {
        if n_groups < 2 {
            return Err(Error::InvalidAxis(format!(
                "an age grid needs at least 2 groups, got {n_groups}"
            )));
        }
        Ok(Self { n_groups })
    }

    /// Build the grid from a list of lower bounds, which must be 0, 5, 10, ...
    pub fn from_lower_bounds(bounds: &[u32]) -> Result<Self> {
        for (a, &lower) in bounds.iter().enumerate() {
            if lower != a as u32 * Self::GROUP_WIDTH {
                return Err(Error::InvalidAxis(format!(
                    "age group {a} starts at {lower}, expected {}",
                    a as u32 * Self::GROUP_WIDTH
                )));
            }
        }
        Self::new(bounds.len())
    }

    pub fn len(&self) -> usize {
        self.n_groups
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lower(&self, a: usize) -> u32 {
        a as u32 * Self::GROUP_WIDTH
    }

    pub fn is_open(&self, a: usize) -> bool {
        a + 1 == self.n_groups
    }

    pub fn index_of(&self, lower: u32) -> Option<usize> {
        if !lower.is_multiple_of(Self::GROUP_WIDTH) {
            return None;
        }
        let a = (lower / Self::GROUP_WIDTH) as usize;
        (a < self.n_groups).then_some(a)
    }

    /// Groups whose whole span lies in `[from, to)` years of age.
    pub fn groups_within(&self, from: u32, to: u32) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_groups)
            .filter(move |&a| !self.is_open(a) && self.lower(a) >= from && self.lower(a) + 5 <= to)
    }
}

/// Ordered start years with a uniform five-year step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodAxis {
    start_years: Vec<i32>,
}

impl PeriodAxis {
    pub fn new(start_years: Vec<i32>) -> Result<Self> {
        if start_years.is_empty() {
            return Err(Error::InvalidAxis("empty period axis".into()));
        }
        for pair in start_years.windows(2) {
            if pair[1] - pair[0] != PERIOD_YEARS as i32 {
                return Err(Error::InvalidAxis(format!(
                    "periods {} and {} are not 5 years apart",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(Self { start_years })
    }

    pub fn uniform(first: i32, len: usize) -> Self {
        Self {
            start_years: (0..len as i32).map(|k| first + 5 * k).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.start_years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start_years.is_empty()
    }

    pub fn first(&self) -> i32 {
        self.start_years[0]
    }

    pub fn last(&self) -> i32 {
        self.start_years[self.start_years.len() - 1]
    }

    pub fn year(&self, t: usize) -> i32 {
        self.start_years[t]
    }

    pub fn years(&self) -> &[i32] {
        &self.start_years
    }

    pub fn index_of(&self, year: i32) -> Option<usize> {
        let offset = year - self.first();
        if offset < 0 || offset % 5 != 0 {
            return None;
        }
        let t = (offset / 5) as usize;
        (t < self.len()).then_some(t)
    }

    /// Prefix of the axis with start years `<= last_year`.
    pub fn truncated(&self, last_year: i32) -> Option<Self> {
        let years: Vec<i32> = self.start_years.iter().copied().filter(|&y| y <= last_year).collect();
        (!years.is_empty()).then_some(Self { start_years: years })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sex {
    Male = 0,
    Female = 1,
}

impl Sex {
    pub const ALL: [Sex; 2] = [Sex::Male, Sex::Female];

    pub fn code(self) -> &'static str {
        match self {
            Sex::Male => "M",
            Sex::Female => "F",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "M" | "m" | "male" => Some(Sex::Male),
            "F" | "f" | "female" => Some(Sex::Female),
            _ => None,
        }
    }
}

/// People counts indexed by (country, time, age group, sex).
///
/// Counts are reals; rounding happens only when writing output.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationGrid {
    countries: Vec<String>,
    times: PeriodAxis,
    ages: AgeGrid,
    values: Vec<f64>,
}

impl PopulationGrid {
    pub fn zeros(countries: Vec<String>, times: PeriodAxis, ages: AgeGrid) -> Self {
        let n = countries.len() * times.len() * ages.len() * 2;
        Self {
            countries,
            times,
            ages,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(
        countries: Vec<String>,
        times: PeriodAxis,
        ages: AgeGrid,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = countries.len() * times.len() * ages.len() * 2;
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                left: expected,
                right: values.len(),
            });
        }
        if let Some(bad) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "population cell {bad} is negative or not finite: {}",
                values[bad]
            )));
        }
        Ok(Self {
            countries,
            times,
            ages,
            values,
        })
    }

    /// Same layout without the nonnegativity check, for net-flow grids.
    pub fn from_signed_values(
        countries: Vec<String>,
        times: PeriodAxis,
        ages: AgeGrid,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = countries.len() * times.len() * ages.len() * 2;
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                left: expected,
                right: values.len(),
            });
        }
        Ok(Self {
            countries,
            times,
            ages,
            values,
        })
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn times(&self) -> &PeriodAxis {
        &self.times
    }

    pub fn ages(&self) -> AgeGrid {
        self.ages
    }

    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    fn offset(&self, i: usize, t: usize) -> usize {
        (i * self.times.len() + t) * self.ages.len() * 2
    }

    #[inline]
    pub fn get(&self, i: usize, t: usize, a: usize, s: Sex) -> f64 {
        self.values[self.offset(i, t) + a * 2 + s as usize]
    }

    #[inline]
    pub fn set(&mut self, i: usize, t: usize, a: usize, s: Sex, value: f64) {
        let k = self.offset(i, t) + a * 2 + s as usize;
        self.values[k] = value;
    }

    /// Age-sex cells of one (country, time) as `[a0 male, a0 female, a1 male, ...]`.
    pub fn cells(&self, i: usize, t: usize) -> &[f64] {
        let start = self.offset(i, t);
        &self.values[start..start + self.ages.len() * 2]
    }

    pub fn cells_mut(&mut self, i: usize, t: usize) -> &mut [f64] {
        let start = self.offset(i, t);
        let n = self.ages.len() * 2;
        &mut self.values[start..start + n]
    }

    /// `P_{i,t,+,+}`
    pub fn total(&self, i: usize, t: usize) -> f64 {
        self.cells(i, t).iter().sum()
    }

    /// `P_{i,t,a,+}`
    pub fn age_total(&self, i: usize, t: usize, a: usize) -> f64 {
        let c = self.cells(i, t);
        c[2 * a] + c[2 * a + 1]
    }

    /// `P_{+,t,a,+}`
    pub fn world_age_total(&self, t: usize, a: usize) -> f64 {
        (0..self.n_countries()).map(|i| self.age_total(i, t, a)).sum()
    }

    /// `P_{+,t,+,+}`
    pub fn world_total(&self, t: usize) -> f64 {
        (0..self.n_countries()).map(|i| self.total(i, t)).sum()
    }

    pub fn country_index(&self, id: &str) -> Option<usize> {
        self.countries.iter().position(|c| c == id)
    }
}

/// Population at risk of migration over a period: the end-of-period
/// population with the period's net migration removed.
#[derive(Debug, Clone, PartialEq)]
pub struct AtRiskPopulation(PopulationGrid);

impl AtRiskPopulation {
    /// Wrap a grid indexed by period start year.
    pub fn new(grid: PopulationGrid) -> Self {
        Self(grid)
    }

    /// `P̃_{t} = P_{t+5} − N_{t}` cell-wise. `end_population` is indexed by
    /// snapshot year and must contain `t + 5` for every period; `net` is
    /// indexed by period.
    pub fn from_end_and_net(end_population: &PopulationGrid, net: &PopulationGrid) -> Result<Self> {
        let periods = net.times().clone();
        let mut out = PopulationGrid::zeros(net.countries().to_vec(), periods.clone(), net.ages());
        for i in 0..net.n_countries() {
            for (t, &year) in periods.years().iter().enumerate() {
                let end_t = end_population.times().index_of(year + 5).ok_or_else(|| {
                    Error::InvalidAxis(format!("no population snapshot for {}", year + 5))
                })?;
                let end = end_population.cells(i, end_t);
                let n = net.cells(i, t);
                let cells = out.cells_mut(i, t);
                for k in 0..cells.len() {
                    cells[k] = end[k] - n[k];
                }
                if cells.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::NonPositiveAtRisk {
                        country: net.countries()[i].clone(),
                        period: year,
                    });
                }
                for c in cells.iter_mut() {
                    // Rounding noise only; a genuinely negative cell means the
                    // inputs were inconsistent and is caught by the total check.
                    *c = c.max(0.0);
                }
            }
        }
        Ok(Self(out))
    }

    pub fn grid(&self) -> &PopulationGrid {
        &self.0
    }

    pub fn into_grid(self) -> PopulationGrid {
        self.0
    }
}

impl std::ops::Deref for AtRiskPopulation {
    type Target = PopulationGrid;

    fn deref(&self) -> &PopulationGrid {
        &self.0
    }
}

/// Annual migrants per thousand at-risk persons.
pub fn net_migration_rate(inflow: f64, outflow: f64, at_risk: f64, period_years: f64) -> Result<f64> {
    if !(at_risk > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "at-risk population must be positive, got {at_risk}"
        )));
    }
    Ok(1000.0 * (inflow - outflow) / (at_risk * period_years))
}

/// Convert an annual per-thousand rate back into a period count.
pub fn rate_to_count(rate: f64, at_risk: f64) -> f64 {
    rate * at_risk * PERIOD_YEARS / 1000.0
}

/// `π_{i,t,·}`: the at-risk age distribution of one country, sexes pooled.
pub fn age_share(pop: &AtRiskPopulation, i: usize, t: usize) -> Result<Vec<f64>> {
    let total = pop.total(i, t);
    if !(total > 0.0) {
        return Err(Error::ZeroPopulation {
            country: pop.countries()[i].clone(),
            period: pop.times().year(t),
        });
    }
    Ok((0..pop.ages().len()).map(|a| pop.age_total(i, t, a) / total).collect())
}

/// `π̌_{t,·}`: the age distribution of the whole world, countries pooled.
pub fn global_age_share(pop: &AtRiskPopulation, t: usize) -> Result<Vec<f64>> {
    let period = pop.times().year(t);
    if pop.n_countries() == 0 {
        return Err(Error::EmptyWorld { period });
    }
    let total = pop.world_total(t);
    if !(total > 0.0) {
        return Err(Error::EmptyWorld { period });
    }
    Ok((0..pop.ages().len())
        .map(|a| pop.world_age_total(t, a) / total)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_country(cells: &[f64]) -> AtRiskPopulation {
        let ages = AgeGrid::new(cells.len() / 2).unwrap();
        AtRiskPopulation::new(
            PopulationGrid::from_values(vec!["AAA".into()], PeriodAxis::uniform(2000, 1), ages, cells.to_vec())
                .unwrap(),
        )
    }

    #[test]
    fn net_rate_examples() {
        assert_eq!(net_migration_rate(0.0, 0.0, 1e6, 5.0).unwrap(), 0.0);
        assert_eq!(net_migration_rate(5e4, 5e4, 1e6, 5.0).unwrap(), 0.0);
        assert!((net_migration_rate(1e5, 2.5e4, 1e6, 5.0).unwrap() - 15.0).abs() < 1e-12);
        assert!(net_migration_rate(1.0, 0.0, 0.0, 5.0).is_err());
        assert!(net_migration_rate(1.0, 0.0, -3.0, 5.0).is_err());
    }

    #[test]
    fn age_share_examples() {
        let uniform = one_country(&[10.0; 8]);
        assert_eq!(age_share(&uniform, 0, 0).unwrap(), vec![0.25; 4]);

        let first = one_country(&[3.0, 4.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(age_share(&first, 0, 0).unwrap(), vec![1.0, 0.0, 0.0]);

        let hand = one_country(&[50.0, 50.0, 100.0, 200.0, 300.0, 300.0]);
        let s = age_share(&hand, 0, 0).unwrap();
        for (got, want) in s.iter().zip([0.1, 0.3, 0.6]) {
            assert!((got - want).abs() < 1e-15);
        }

        let empty = one_country(&[0.0; 6]);
        assert!(matches!(age_share(&empty, 0, 0), Err(Error::ZeroPopulation { .. })));
    }

    #[test]
    fn global_share_is_population_weighted() {
        let ages = AgeGrid::new(3).unwrap();
        let cells = vec![
            10.0, 10.0, 30.0, 30.0, 20.0, 0.0, // 100 people
            5.0, 5.0, 0.0, 0.0, 90.0, 100.0, // 200 people
            1.0, 1.0, 1.0, 1.0, 1.0, 1.0, // 6 people
        ];
        let pop = AtRiskPopulation::new(
            PopulationGrid::from_values(
                vec!["A".into(), "B".into(), "C".into()],
                PeriodAxis::uniform(2000, 1),
                ages,
                cells,
            )
            .unwrap(),
        );
        let global = global_age_share(&pop, 0).unwrap();
        // direct summation oracle
        let weights = [100.0, 200.0, 6.0];
        let total: f64 = weights.iter().sum();
        for a in 0..3 {
            let mut want = 0.0;
            for i in 0..3 {
                want += weights[i] / total * age_share(&pop, i, 0).unwrap()[a];
            }
            assert!((global[a] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn global_share_one_country_and_equal_pair() {
        let one = one_country(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(global_age_share(&one, 0).unwrap(), age_share(&one, 0, 0).unwrap());

        let ages = AgeGrid::new(2).unwrap();
        let pop = AtRiskPopulation::new(
            PopulationGrid::from_values(
                vec!["A".into(), "B".into()],
                PeriodAxis::uniform(2000, 1),
                ages,
                vec![10.0, 10.0, 30.0, 50.0, 25.0, 25.0, 25.0, 25.0],
            )
            .unwrap(),
        );
        let u = age_share(&pop, 0, 0).unwrap();
        let v = age_share(&pop, 1, 0).unwrap();
        let g = global_age_share(&pop, 0).unwrap();
        for a in 0..2 {
            assert!((g[a] - (u[a] + v[a]) / 2.0).abs() < 1e-15);
        }

        let none = AtRiskPopulation::new(PopulationGrid::zeros(vec![], PeriodAxis::uniform(2000, 1), ages));
        assert!(matches!(global_age_share(&none, 0), Err(Error::EmptyWorld { .. })));
    }

    #[test]
    fn at_risk_identity() {
        let ages = AgeGrid::new(2).unwrap();
        let snapshots = PopulationGrid::from_values(
            vec!["A".into()],
            PeriodAxis::uniform(2000, 2),
            ages,
            vec![10.0, 10.0, 10.0, 10.0, 12.0, 9.0, 11.0, 10.0],
        )
        .unwrap();
        let net = PopulationGrid::from_signed_values(
            vec!["A".into()],
            PeriodAxis::uniform(2000, 1),
            ages,
            vec![2.0, -1.0, 1.0, 0.0],
        )
        .unwrap();
        let at_risk = AtRiskPopulation::from_end_and_net(&snapshots, &net).unwrap();
        assert_eq!(at_risk.total(0, 0), snapshots.total(0, 1) - net.total(0, 0));
        assert_eq!(at_risk.cells(0, 0), &[10.0, 10.0, 10.0, 10.0]);
    }

    #[test]
    fn axes_validate() {
        assert!(AgeGrid::new(1).is_err());
        assert!(PeriodAxis::new(vec![1950, 1956]).is_err());
        assert!(PeriodAxis::new(vec![]).is_err());
        let axis = PeriodAxis::new(vec![1950, 1955, 1960]).unwrap();
        assert_eq!(axis.index_of(1960), Some(2));
        assert_eq!(axis.index_of(1957), None);
        assert_eq!(axis.index_of(1965), None);
        let g = AgeGrid::new(21).unwrap();
        assert_eq!(g.groups_within(15, 65).collect::<Vec<_>>(), (3..13).collect::<Vec<_>>());
        assert!(AgeGrid::from_lower_bounds(&[0, 5, 11]).is_err());
    }

    proptest! {
        #[test]
        fn marginals_agree_across_summation_orders(
            cells in proptest::collection::vec(0.0f64..1e7, 3 * 2 * 4 * 2)
        ) {
            let ages = AgeGrid::new(4).unwrap();
            let grid = PopulationGrid::from_values(
                vec!["A".into(), "B".into(), "C".into()],
                PeriodAxis::uniform(1990, 2),
                ages,
                cells,
            ).unwrap();
            for t in 0..2 {
                let by_country: f64 = (0..3).map(|i| grid.total(i, t)).sum();
                let by_age: f64 = (0..4).map(|a| grid.world_age_total(t, a)).sum();
                let tol = 1e-9 * by_country.max(1.0);
                prop_assert!((by_country - by_age).abs() <= tol);
                prop_assert!((grid.world_total(t) - by_age).abs() <= tol);
            }
            for i in 0..3 {
                let pop = AtRiskPopulation::new(grid.clone());
                if grid.total(i, 0) > 0.0 {
                    let s = age_share(&pop, i, 0).unwrap();
                    prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    prop_assert!(s.iter().all(|&x| (0.0..=1.0).contains(&x)));
                }
            }
        }
    }
}
