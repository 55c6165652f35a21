use crate::error::{Error, Result};
use crate::grid::{AgeGrid, PeriodAxis, Sex};

/// Exogenous fertility and survival inputs per country and period.
#[derive(Debug, Clone, PartialEq)]
pub struct VitalRates {
    countries: Vec<String>,
    periods: PeriodAxis,
    ages: AgeGrid,
    /// `(i, t, a, s)`: share of persons in group `a` at the start of the
    /// period alive five years later (in group `a + 1`, or still in the top
    /// group).
    survival: Vec<f64>,
    /// `(i, t, a)`: annual births per woman.
    fertility: Vec<f64>,
    /// `(i, t, s)`: share of births in the period alive at its end.
    birth_survival: Vec<f64>,
    /// `(i, t)`: male births per female birth.
    sex_ratio_at_birth: Vec<f64>,
}

/// Vital rates of one country in one period.
#[derive(Debug, Clone, Copy)]
pub struct VitalView<'a> {
    pub survival: &'a [f64],
    pub fertility: &'a [f64],
    pub birth_survival: &'a [f64],
    pub sex_ratio_at_birth: f64,
}

impl VitalView<'_> {
    pub fn survival(&self, a: usize, s: Sex) -> f64 {
        self.survival[2 * a + s as usize]
    }
}

impl VitalRates {
    pub fn new(
        countries: Vec<String>,
        periods: PeriodAxis,
        ages: AgeGrid,
        survival: Vec<f64>,
        fertility: Vec<f64>,
        birth_survival: Vec<f64>,
        sex_ratio_at_birth: Vec<f64>,
    ) -> Result<Self> {
        let cells = countries.len() * periods.len();
        let check = |name: &str, v: &[f64], per: usize| -> Result<()> {
            if v.len() != cells * per {
                return Err(Error::InvalidArgument(format!(
                    "{name}: expected {} values, got {}",
                    cells * per,
                    v.len()
                )));
            }
            Ok(())
        };
        check("survival", &survival, ages.len() * 2)?;
        check("fertility", &fertility, ages.len())?;
        check("birth survival", &birth_survival, 2)?;
        check("sex ratio at birth", &sex_ratio_at_birth, 1)?;
        if survival.iter().chain(&birth_survival).any(|s| !(*s > 0.0 && *s <= 1.0)) {
            return Err(Error::InvalidArgument("survivorship must lie in (0, 1]".into()));
        }
        if fertility.iter().any(|f| !(*f >= 0.0) || !f.is_finite()) {
            return Err(Error::InvalidArgument("fertility must be nonnegative".into()));
        }
        if sex_ratio_at_birth.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument("sex ratio at birth must be positive".into()));
        }
        Ok(Self {
            countries,
            periods,
            ages,
            survival,
            fertility,
            birth_survival,
            sex_ratio_at_birth,
        })
    }

    /// Constant rates for every country and period.
    pub fn constant(
        countries: Vec<String>,
        periods: PeriodAxis,
        ages: AgeGrid,
        survival: f64,
        fertility: f64,
        sex_ratio_at_birth: f64,
    ) -> Result<Self> {
        let cells = countries.len() * periods.len();
        Self::new(
            countries,
            periods,
            ages,
            vec![survival; cells * ages.len() * 2],
            vec![fertility; cells * ages.len()],
            vec![survival; cells * 2],
            vec![sex_ratio_at_birth; cells],
        )
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn periods(&self) -> &PeriodAxis {
        &self.periods
    }

    pub fn ages(&self) -> AgeGrid {
        self.ages
    }

    pub fn view(&self, country: &str, year: i32) -> Result<VitalView<'_>> {
        let missing = || Error::MissingVitals {
            country: country.to_string(),
            period: year,
        };
        let i = self.countries.iter().position(|c| c == country).ok_or_else(missing)?;
        let t = self.periods.index_of(year).ok_or_else(missing)?;
        let k = i * self.periods.len() + t;
        let n_a = self.ages.len();
        Ok(VitalView {
            survival: &self.survival[k * n_a * 2..(k + 1) * n_a * 2],
            fertility: &self.fertility[k * n_a..(k + 1) * n_a],
            birth_survival: &self.birth_survival[k * 2..k * 2 + 2],
            sex_ratio_at_birth: self.sex_ratio_at_birth[k],
        })
    }

    /// Mutable access for generators: `(survival, fertility, birth survival, srb)`.
    pub fn cell_mut(&mut self, i: usize, t: usize) -> (&mut [f64], &mut [f64], &mut [f64], &mut f64) {
        let k = i * self.periods.len() + t;
        let n_a = self.ages.len();
        (
            &mut self.survival[k * n_a * 2..(k + 1) * n_a * 2],
            &mut self.fertility[k * n_a..(k + 1) * n_a],
            &mut self.birth_survival[k * 2..k * 2 + 2],
            &mut self.sex_ratio_at_birth[k],
        )
    }
}
