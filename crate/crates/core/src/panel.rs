use crate::error::{Error, Result};
use crate::grid::PeriodAxis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RateKind {
    Nmr,
    Imr,
    Omr,
    NmrStar,
    ImrStar,
    OmrStar,
}

impl RateKind {
    /// Gross flow rates can never be negative.
    pub fn is_gross(self) -> bool {
        matches!(self, RateKind::Imr | RateKind::Omr | RateKind::ImrStar | RateKind::OmrStar)
    }

    pub fn is_standardized(self) -> bool {
        matches!(self, RateKind::NmrStar | RateKind::ImrStar | RateKind::OmrStar)
    }

    pub fn name(self) -> &'static str {
        match self {
            RateKind::Nmr => "nmr",
            RateKind::Imr => "imr",
            RateKind::Omr => "omr",
            RateKind::NmrStar => "nmr_star",
            RateKind::ImrStar => "imr_star",
            RateKind::OmrStar => "omr_star",
        }
    }
}

/// Per-country, per-period migration rates in annual migrants per thousand
/// at-risk persons. Cells may be missing (e.g. flows before 1990).
#[derive(Debug, Clone, PartialEq)]
pub struct RatePanel {
    kind: RateKind,
    countries: Vec<String>,
    periods: PeriodAxis,
    values: Vec<Option<f64>>,
}

impl RatePanel {
    pub fn empty(kind: RateKind, countries: Vec<String>, periods: PeriodAxis) -> Self {
        let n = countries.len() * periods.len();
        Self {
            kind,
            countries,
            periods,
            values: vec![None; n],
        }
    }

    pub fn from_values(
        kind: RateKind,
        countries: Vec<String>,
        periods: PeriodAxis,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        if values.len() != countries.len() * periods.len() {
            return Err(Error::LengthMismatch {
                left: countries.len() * periods.len(),
                right: values.len(),
            });
        }
        let panel = Self {
            kind,
            countries,
            periods,
            values,
        };
        panel.validate()?;
        Ok(panel)
    }

    fn validate(&self) -> Result<()> {
        for i in 0..self.countries.len() {
            for t in 0..self.periods.len() {
                if let Some(v) = self.get(i, t) {
                    if !v.is_finite() || (self.kind.is_gross() && v < 0.0) {
                        return Err(Error::InvalidArgument(format!(
                            "{} value {v} for {} in {} is invalid",
                            self.kind.name(),
                            self.countries[i],
                            self.periods.year(t)
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> RateKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: RateKind) -> Result<Self> {
        self.kind = kind;
        self.validate()?;
        Ok(self)
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn periods(&self) -> &PeriodAxis {
        &self.periods
    }

    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    #[inline]
    pub fn get(&self, i: usize, t: usize) -> Option<f64> {
        self.values[i * self.periods.len() + t]
    }

    #[inline]
    pub fn set(&mut self, i: usize, t: usize, value: Option<f64>) {
        let n = self.periods.len();
        self.values[i * n + t] = value;
    }

    /// Observed values of one country in period order, `None` for gaps.
    pub fn series(&self, i: usize) -> &[Option<f64>] {
        let n = self.periods.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn observed(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.periods.len();
        self.values
            .iter()
            .enumerate()
            .filter_map(move |(k, v)| v.map(|v| (k / n, k % n, v)))
    }

    pub fn country_index(&self, id: &str) -> Option<usize> {
        self.countries.iter().position(|c| c == id)
    }

    /// Cells with start year `<= last_year`.
    pub fn truncated(&self, last_year: i32) -> Option<Self> {
        let periods = self.periods.truncated(last_year)?;
        let mut out = Self::empty(self.kind, self.countries.clone(), periods.clone());
        for i in 0..self.countries.len() {
            for t in 0..periods.len() {
                out.set(i, t, self.get(i, t));
            }
        }
        Some(out)
    }
}

/// Largest relative violation of `NMR = IMR − OMR` over cells present in all
/// three panels.
pub fn identity_error(nmr: &RatePanel, imr: &RatePanel, omr: &RatePanel) -> f64 {
    let mut worst = 0.0f64;
    for (i, t, n) in nmr.observed() {
        if let (Some(inr), Some(out)) = (imr.get(i, t), omr.get(i, t)) {
            let scale = n.abs().max(inr.abs()).max(out.abs()).max(1.0);
            worst = worst.max(((inr - out) - n).abs() / scale);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::net_migration_rate;

    #[test]
    fn gross_panels_reject_negative() {
        let periods = PeriodAxis::uniform(1990, 2);
        let err = RatePanel::from_values(RateKind::Imr, vec!["A".into()], periods.clone(), vec![Some(1.0), Some(-0.5)]);
        assert!(err.is_err());
        assert!(RatePanel::from_values(RateKind::Nmr, vec!["A".into()], periods, vec![Some(1.0), Some(-0.5)]).is_ok());
    }

    #[test]
    fn rates_from_common_counts_satisfy_identity() {
        let periods = PeriodAxis::uniform(1990, 3);
        let flows = [(1.2e5, 4.0e4, 3.1e6), (0.0, 7.5e3, 2.0e5), (9.9e4, 9.9e4, 8.0e6)];
        let mut nmr = RatePanel::empty(RateKind::Nmr, vec!["A".into()], periods.clone());
        let mut imr = RatePanel::empty(RateKind::Imr, vec!["A".into()], periods.clone());
        let mut omr = RatePanel::empty(RateKind::Omr, vec!["A".into()], periods);
        for (t, &(i, o, p)) in flows.iter().enumerate() {
            nmr.set(0, t, Some(net_migration_rate(i, o, p, 5.0).unwrap()));
            imr.set(0, t, Some(net_migration_rate(i, 0.0, p, 5.0).unwrap()));
            omr.set(0, t, Some(net_migration_rate(o, 0.0, p, 5.0).unwrap()));
        }
        assert!(identity_error(&nmr, &imr, &omr) < 1e-12);
    }

    #[test]
    fn truncation_keeps_prefix() {
        let periods = PeriodAxis::uniform(1990, 3);
        let p = RatePanel::from_values(RateKind::Nmr, vec!["A".into()], periods, vec![Some(1.0), None, Some(3.0)]).unwrap();
        let t = p.truncated(1995).unwrap();
        assert_eq!(t.series(0), &[Some(1.0), None]);
        assert!(p.truncated(1980).is_none());
    }
}
