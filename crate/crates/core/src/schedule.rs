//! Normalized migration age schedules `R_a`.

use crate::error::{Error, Result};
use crate::grid::AgeGrid;

/// Rogers–Castro model schedule parameters. These are the textbook
/// "fundamental" values, not estimates.
#[derive(Debug, Clone, Copy)]
pub struct RogersCastro {
    pub pre_labor_level: f64,
    pub pre_labor_descent: f64,
    pub labor_level: f64,
    pub labor_mean_age: f64,
    pub labor_descent: f64,
    pub labor_ascent: f64,
    pub constant: f64,
}

impl Default for RogersCastro {
    fn default() -> Self {
        Self {
            pre_labor_level: 0.02,
            pre_labor_descent: 0.1,
            labor_level: 0.06,
            labor_mean_age: 20.0,
            labor_descent: 0.1,
            labor_ascent: 0.4,
            constant: 0.003,
        }
    }
}

impl RogersCastro {
    pub fn rate_at(&self, age: f64) -> f64 {
        let x = age - self.labor_mean_age;
        self.pre_labor_level * (-self.pre_labor_descent * age).exp()
            + self.labor_level * (-self.labor_descent * x - (-self.labor_ascent * x).exp()).exp()
            + self.constant
    }
}

/// Age profile of migration over an [`AgeGrid`], summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeSchedule {
    weights: Vec<f64>,
}

impl AgeSchedule {
    /// Normalize raw nonnegative weights.
    pub fn from_weights(raw: &[f64]) -> Result<Self> {
        if raw.len() < 2 {
            return Err(Error::InvalidSchedule("fewer than 2 age groups".into()));
        }
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidSchedule("weights must be finite and nonnegative".into()));
        }
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidSchedule("weights sum to zero".into()));
        }
        Ok(Self {
            weights: raw.iter().map(|w| w / total).collect(),
        })
    }

    /// Default schedule: a Rogers–Castro curve evaluated at group midpoints
    /// (the open top group at its lower bound plus 2.5), renormalized.
    pub fn rogers_castro(ages: AgeGrid, params: &RogersCastro) -> Self {
        let raw: Vec<f64> = (0..ages.len())
            .map(|a| params.rate_at(ages.lower(a) as f64 + 2.5))
            .collect();
        Self::from_weights(&raw).expect("Rogers-Castro rates are positive")
    }

    pub fn default_for(ages: AgeGrid) -> Self {
        Self::rogers_castro(ages, &RogersCastro::default())
    }

    pub fn flat(ages: AgeGrid) -> Self {
        Self::from_weights(&vec![1.0; ages.len()]).expect("flat weights are valid")
    }

    pub fn indicator(ages: AgeGrid, a: usize) -> Self {
        let mut w = vec![0.0; ages.len()];
        w[a] = 1.0;
        Self::from_weights(&w).expect("indicator weights are valid")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn check_grid(&self, ages: AgeGrid) -> Result<()> {
        if self.weights.len() != ages.len() {
            return Err(Error::GridMismatch {
                expected: ages.len(),
                got: self.weights.len(),
            });
        }
        Ok(())
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::MAX, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_shape() {
        let ages = AgeGrid::new(21).unwrap();
        let r = AgeSchedule::default_for(ages);
        assert!((r.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let peak = r
            .weights()
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(ages.lower(peak), 20);
        // child bump: 0-4 above the 10-14 trough
        assert!(r.weights()[0] > r.weights()[2]);
        assert!(r.weights()[1] > r.weights()[2]);
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(AgeSchedule::from_weights(&[0.0, 0.0]).is_err());
        assert!(AgeSchedule::from_weights(&[1.0, -1.0, 1.0]).is_err());
        assert!(AgeSchedule::from_weights(&[1.0]).is_err());
        assert!(AgeSchedule::from_weights(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn renormalizes() {
        let s = AgeSchedule::from_weights(&[2.0, 6.0, 2.0]).unwrap();
        assert_eq!(s.weights(), &[0.2, 0.6, 0.2]);
    }
}
