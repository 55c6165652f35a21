//! Migration Age Structure Index and exact age standardization of rates.
//!
//! With a fixed age pattern `R_a` of migration rates, the out-migration rate a
//! population would have under another age distribution is the observed rate
//! scaled by the ratio of the two indices `C = Σ_a π_a R_a`. In-migration is
//! standardized the same way against the world's age distribution.

use crate::error::{Error, Result};
use crate::grid::{age_share, global_age_share, AtRiskPopulation};
use crate::schedule::AgeSchedule;

/// `C = Σ_a π_a R_a`.
pub fn masi(shares: &[f64], schedule: &AgeSchedule) -> Result<f64> {
    if shares.len() != schedule.len() {
        return Err(Error::GridMismatch {
            expected: schedule.len(),
            got: shares.len(),
        });
    }
    Ok(shares.iter().zip(schedule.weights()).map(|(p, r)| p * r).sum())
}

fn check_positive(value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveMasi { value })
    }
}

/// `OMR★ = OMR · C_ref / C_current`.
pub fn standardize_omr(omr: f64, current: f64, reference: f64) -> Result<f64> {
    check_positive(current)?;
    check_positive(reference)?;
    Ok(omr * reference / current)
}

/// `IMR★ = IMR · Č_ref / Č_current`, with world-level indices.
pub fn standardize_imr(imr: f64, global_current: f64, global_reference: f64) -> Result<f64> {
    check_positive(global_current)?;
    check_positive(global_reference)?;
    Ok(imr * global_reference / global_current)
}

pub fn standardized_nmr(imr_star: f64, omr_star: f64) -> f64 {
    imr_star - omr_star
}

/// Out-migration rate of a population with the same age-specific rates as
/// the observed one but age distribution `ref_shares`, computed by direct
/// summation over ages. Makes no assumption about the shape of the rates.
pub fn oracle_standardized_omr(age_omr: &[f64], shares: &[f64], ref_shares: &[f64]) -> Result<f64> {
    if age_omr.len() != shares.len() || shares.len() != ref_shares.len() {
        return Err(Error::GridMismatch {
            expected: age_omr.len(),
            got: shares.len().min(ref_shares.len()),
        });
    }
    if age_omr.iter().any(|r| *r < 0.0) {
        return Err(Error::InvalidArgument("age-specific rates must be nonnegative".into()));
    }
    // OMR = Σ_a (O_a / P_a)(P_a / P) = Σ_a OMR_a π_a
    let observed: f64 = age_omr.iter().zip(shares).map(|(r, p)| r * p).sum();
    let reference: f64 = age_omr.iter().zip(ref_shares).map(|(r, p)| r * p).sum();
    if !(observed > 0.0) {
        return Err(Error::ZeroOracleDenominator);
    }
    Ok(reference)
}

/// Ratios of current to reference MASI for one (country, period).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasiRatio {
    /// `C_{i,t} / C_{i,ref}`
    pub country: f64,
    /// `Č_t / Č_ref`
    pub global: f64,
}

impl MasiRatio {
    /// Ratios of the age-agnostic method.
    pub const ONE: MasiRatio = MasiRatio {
        country: 1.0,
        global: 1.0,
    };
}

/// Country and world MASI over a panel of periods, with a reference period.
#[derive(Debug, Clone, PartialEq)]
pub struct Masi {
    n_periods: usize,
    country: Vec<f64>,
    global: Vec<f64>,
    reference: usize,
}

impl Masi {
    /// Compute from at-risk age distributions. `reference` indexes the
    /// period whose age structure is the standard.
    pub fn compute(pop: &AtRiskPopulation, schedule: &AgeSchedule, reference: usize) -> Result<Self> {
        schedule.check_grid(pop.ages())?;
        let n_periods = pop.times().len();
        if reference >= n_periods {
            return Err(Error::InvalidArgument(format!(
                "reference period index {reference} outside {n_periods} periods"
            )));
        }
        let mut country = Vec::with_capacity(pop.n_countries() * n_periods);
        for i in 0..pop.n_countries() {
            for t in 0..n_periods {
                country.push(masi(&age_share(pop, i, t)?, schedule)?);
            }
        }
        let global = (0..n_periods)
            .map(|t| masi(&global_age_share(pop, t)?, schedule))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_periods,
            country,
            global,
            reference,
        })
    }

    pub fn country(&self, i: usize, t: usize) -> f64 {
        self.country[i * self.n_periods + t]
    }

    pub fn global(&self, t: usize) -> f64 {
        self.global[t]
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn country_reference(&self, i: usize) -> f64 {
        self.country(i, self.reference)
    }

    pub fn global_reference(&self) -> f64 {
        self.global[self.reference]
    }

    pub fn ratio(&self, i: usize, t: usize) -> MasiRatio {
        MasiRatio {
            country: self.country(i, t) / self.country_reference(i),
            global: self.global(t) / self.global_reference(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AgeGrid, PeriodAxis, PopulationGrid};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn masi_examples() {
        let ages = AgeGrid::new(3).unwrap();
        let r = AgeSchedule::from_weights(&[0.1, 0.7, 0.2]).unwrap();
        let uniform = vec![1.0 / 3.0; 3];
        assert!((masi(&uniform, &r).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(masi(&[0.0, 1.0, 0.0], &r).unwrap(), r.weights()[1]);
        assert!((masi(&[0.2, 0.5, 0.3], &r).unwrap() - 0.43).abs() < 1e-15);
        assert!(matches!(
            masi(&[0.5, 0.5], &AgeSchedule::default_for(ages)),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn standardize_examples() {
        assert_eq!(standardize_omr(7.3, 0.2, 0.2).unwrap(), 7.3);
        assert!((standardize_omr(10.0, 1.0, 0.8).unwrap() - 8.0).abs() < 1e-15);
        assert!(standardize_omr(10.0, 0.0, 0.8).is_err());
        assert!(standardize_omr(10.0, -1.0, 0.8).is_err());
        assert_eq!(standardize_imr(5.0, 0.11, 0.11).unwrap(), 5.0);
        assert!((standardize_imr(5.0, 0.8, 1.0).unwrap() - 6.25).abs() < 1e-15);
        assert_eq!(standardized_nmr(3.0, 3.0), 0.0);
        assert_eq!(standardized_nmr(6.25, 8.0), -1.75);
    }

    #[test]
    fn one_country_world_in_and_out_agree() {
        let ages = AgeGrid::new(3).unwrap();
        let r = AgeSchedule::from_weights(&[0.2, 0.5, 0.3]).unwrap();
        let grid = PopulationGrid::from_values(
            vec!["A".into()],
            PeriodAxis::uniform(2000, 2),
            ages,
            vec![10.0, 12.0, 30.0, 28.0, 9.0, 11.0, 5.0, 6.0, 40.0, 35.0, 20.0, 25.0],
        )
        .unwrap();
        let m = Masi::compute(&AtRiskPopulation::new(grid), &r, 1).unwrap();
        for t in 0..2 {
            assert_eq!(m.country(0, t), m.global(t));
            let a = standardize_imr(4.0, m.global(t), m.global_reference()).unwrap();
            let b = standardize_omr(4.0, m.country(0, t), m.country_reference(0)).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(m.ratio(0, 1), MasiRatio::ONE);
    }

    #[test]
    fn oracle_examples() {
        let omr_a = [1.0, 5.0, 2.0, 0.5];
        let pi = [0.3, 0.3, 0.2, 0.2];
        let observed: f64 = omr_a.iter().zip(&pi).map(|(r, p)| r * p).sum();
        assert!(close(oracle_standardized_omr(&omr_a, &pi, &pi).unwrap(), observed, 1e-15));

        let flat = [3.0; 4];
        let other = [0.7, 0.1, 0.1, 0.1];
        assert!(close(oracle_standardized_omr(&flat, &pi, &other).unwrap(), 3.0, 1e-15));

        assert!(matches!(
            oracle_standardized_omr(&[0.0, 0.0, 1.0, 0.0], &[0.5, 0.5, 0.0, 0.0], &pi),
            Err(Error::ZeroOracleDenominator)
        ));
        assert!(oracle_standardized_omr(&[-1.0, 1.0, 1.0, 1.0], &pi, &pi).is_err());
    }

    #[test]
    fn theorem_equality_with_g_two() {
        let r = AgeSchedule::from_weights(&[0.1, 0.4, 0.3, 0.2]).unwrap();
        let age_omr: Vec<f64> = r.weights().iter().map(|w| 2.0 * w).collect();
        let pi = [0.4, 0.3, 0.2, 0.1];
        let pi_ref = [0.1, 0.2, 0.3, 0.4];
        let omr: f64 = age_omr.iter().zip(&pi).map(|(x, p)| x * p).sum();
        let c = masi(&pi, &r).unwrap();
        let c_ref = masi(&pi_ref, &r).unwrap();
        let direct = oracle_standardized_omr(&age_omr, &pi, &pi_ref).unwrap();
        let scaled = standardize_omr(omr, c, c_ref).unwrap();
        assert!(close(direct, scaled, 1e-12));
    }

    fn simplex(raw: Vec<f64>) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / s).collect()
    }

    proptest! {
        #[test]
        fn theorem_equivalence(
            pi in proptest::collection::vec(0.01f64..1.0, 8),
            pi_ref in proptest::collection::vec(0.01f64..1.0, 8),
            raw_r in proptest::collection::vec(0.001f64..1.0, 8),
            g in 0.01f64..500.0,
        ) {
            let pi = simplex(pi);
            let pi_ref = simplex(pi_ref);
            let r = AgeSchedule::from_weights(&raw_r).unwrap();
            let age_omr: Vec<f64> = r.weights().iter().map(|w| g * w).collect();
            let omr: f64 = age_omr.iter().zip(&pi).map(|(x, p)| x * p).sum();
            let oracle = oracle_standardized_omr(&age_omr, &pi, &pi_ref).unwrap();
            let via_masi = omr * masi(&pi_ref, &r).unwrap() / masi(&pi, &r).unwrap();
            prop_assert!(close(oracle, via_masi, 1e-12));
        }

        #[test]
        fn masi_bounds(
            pi in proptest::collection::vec(0.0f64..1.0, 6),
            raw_r in proptest::collection::vec(0.0f64..1.0, 6),
        ) {
            prop_assume!(pi.iter().sum::<f64>() > 0.0 && raw_r.iter().sum::<f64>() > 0.0);
            let pi = simplex(pi);
            let r = AgeSchedule::from_weights(&raw_r).unwrap();
            let c = masi(&pi, &r).unwrap();
            prop_assert!(c >= r.min_weight() - 1e-15 && c <= r.max_weight() + 1e-15);
        }

        #[test]
        fn shifting_mass_toward_high_schedule_weight_raises_masi(
            pi in proptest::collection::vec(0.01f64..1.0, 6),
            raw_r in proptest::collection::vec(0.0f64..1.0, 6),
            from in 0usize..6,
            to in 0usize..6,
            fraction in 0.01f64..1.0,
        ) {
            let pi = simplex(pi);
            let r = AgeSchedule::from_weights(&{ let mut w = raw_r; w[0] += 0.01; w }).unwrap();
            let w = r.weights();
            prop_assume!(w[to] > w[from] + 1e-9);
            let mut moved = pi.clone();
            let delta = pi[from] * fraction;
            moved[from] -= delta;
            moved[to] += delta;
            prop_assert!(masi(&moved, &r).unwrap() > masi(&pi, &r).unwrap());
        }
    }
}
