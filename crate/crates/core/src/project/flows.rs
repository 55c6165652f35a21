use crate::country::CountryMeta;
use crate::error::{Error, Result};
use crate::grid::{rate_to_count, AgeGrid};
use crate::masi::MasiRatio;
use crate::schedule::AgeSchedule;
use crate::PERIOD_YEARS;

/// Current and reference MASI of one country and of the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasiTerms {
    pub country: f64,
    pub country_reference: f64,
    pub global: f64,
    pub global_reference: f64,
}

impl MasiTerms {
    /// Terms with every ratio equal to one.
    pub const NEUTRAL: MasiTerms = MasiTerms {
        country: 1.0,
        country_reference: 1.0,
        global: 1.0,
        global_reference: 1.0,
    };

    pub fn ratio(&self) -> MasiRatio {
        MasiRatio {
            country: self.country / self.country_reference,
            global: self.global / self.global_reference,
        }
    }

    fn check(&self) -> Result<()> {
        for v in [self.country, self.country_reference, self.global, self.global_reference] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveMasi { value: v });
            }
        }
        Ok(())
    }
}

/// In- and out-migration counts of one country in one period, `(age, sex)`
/// order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowCells {
    pub inflow: Vec<f64>,
    pub outflow: Vec<f64>,
}

impl FlowCells {
    pub fn zeros(n_cells: usize) -> Self {
        Self {
            inflow: vec![0.0; n_cells],
            outflow: vec![0.0; n_cells],
        }
    }

    pub fn inflow_total(&self) -> f64 {
        self.inflow.iter().sum()
    }

    pub fn outflow_total(&self) -> f64 {
        self.outflow.iter().sum()
    }

    pub fn net_total(&self) -> f64 {
        self.inflow_total() - self.outflow_total()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Disaggregated {
    pub flows: FlowCells,
    /// Outflow that could not be placed because it exceeded the whole
    /// at-risk population.
    pub lost_outflow: f64,
    /// A GCC country fell back to the base schedule.
    pub schedule_fallback: bool,
}

/// Split a standardized net rate with the standardized-scale fit.
pub fn split_standardized_rate(nmr_star: f64, intercept: f64, slope: f64) -> (f64, f64) {
    crate::decompose::split_rate(intercept, slope, nmr_star)
}

/// `IMR = IMR★ · Č_t / Č_ref`, `OMR = OMR★ · C_t / C_ref`.
pub fn destandardize(imr_star: f64, omr_star: f64, terms: &MasiTerms) -> Result<(f64, f64)> {
    terms.check()?;
    let r = terms.ratio();
    Ok((imr_star * r.global, omr_star * r.country))
}

/// Standardized net rate implied by flow totals after rebalancing.
pub fn recompute_standardized_nmr(inflow: f64, outflow: f64, at_risk: f64, terms: &MasiTerms) -> Result<f64> {
    terms.check()?;
    if !(at_risk > 0.0) {
        return Err(Error::ZeroAtRisk);
    }
    let r = terms.ratio();
    let scale = 1000.0 / (at_risk * PERIOD_YEARS);
    Ok(inflow * scale / r.global - outflow * scale / r.country)
}

/// Outflow schedule for GCC countries: weights proportional to
/// `max(π_a − R_a, 0)` over working ages 15 to 64, so that emigration
/// concentrates in the age groups swollen by labor immigration. Returns the
/// base schedule and `true` when no working-age group exceeds it.
pub fn gcc_outflow_schedule(shares: &[f64], base: &AgeSchedule, ages: AgeGrid) -> Result<(AgeSchedule, bool)> {
    base.check_grid(ages)?;
    if shares.len() != ages.len() {
        return Err(Error::GridMismatch {
            expected: ages.len(),
            got: shares.len(),
        });
    }
    let mut w = vec![0.0; ages.len()];
    for a in ages.groups_within(15, 65) {
        w[a] = (shares[a] - base.weights()[a]).max(0.0);
    }
    if w.iter().sum::<f64>() > 0.0 {
        Ok((AgeSchedule::from_weights(&w)?, false))
    } else {
        Ok((base.clone(), true))
    }
}

/// Sex split of one age group following the at-risk population; even when
/// the group is empty.
fn sex_split(at_risk: &[f64], a: usize) -> [f64; 2] {
    let (m, f) = (at_risk[2 * a], at_risk[2 * a + 1]);
    if m + f > 0.0 {
        [m / (m + f), f / (m + f)]
    } else {
        [0.5, 0.5]
    }
}

/// Cap each cell at its capacity, moving the excess to uncapped cells in
/// proportion to their allocation (or to remaining capacity when those
/// allocations are all zero). Returns mass that fits nowhere.
pub fn cap_and_redistribute(alloc: &mut [f64], capacity: &[f64]) -> f64 {
    let total: f64 = alloc.iter().sum();
    let tol = 1e-12 * total.max(1.0);
    for _ in 0..=alloc.len() {
        let mut excess = 0.0;
        for (v, &c) in alloc.iter_mut().zip(capacity) {
            if *v > c {
                excess += *v - c;
                *v = c;
            }
        }
        if excess <= tol {
            return 0.0;
        }
        let free: Vec<usize> = (0..alloc.len()).filter(|&k| alloc[k] < capacity[k]).collect();
        if free.is_empty() {
            return excess;
        }
        let mut weight: Vec<f64> = free.iter().map(|&k| alloc[k]).collect();
        if weight.iter().sum::<f64>() <= 0.0 {
            weight = free.iter().map(|&k| capacity[k] - alloc[k]).collect();
        }
        let sum: f64 = weight.iter().sum();
        for (&k, w) in free.iter().zip(weight) {
            alloc[k] += excess * w / sum;
        }
    }
    // Each round caps at least one more cell, so this is unreachable for
    // finite inputs.
    alloc.iter().zip(capacity).map(|(v, c)| (v - c).max(0.0)).sum()
}

/// Turn gross rates into `(age, sex)` flow counts. Totals are
/// `rate · P̃ · 5 / 1000`; ages follow the migration schedule (the GCC
/// outflow schedule for GCC countries) and sexes follow the at-risk
/// population. Outflows never exceed the at-risk population of their cell.
pub fn disaggregate_flows(
    imr: f64,
    omr: f64,
    at_risk: &[f64],
    ages: AgeGrid,
    schedule: &AgeSchedule,
    meta: &CountryMeta,
) -> Result<Disaggregated> {
    schedule.check_grid(ages)?;
    if at_risk.len() != 2 * ages.len() {
        return Err(Error::GridMismatch {
            expected: 2 * ages.len(),
            got: at_risk.len(),
        });
    }
    if !(imr >= 0.0 && omr >= 0.0) {
        return Err(Error::InvalidArgument(format!("gross rates must be nonnegative, got {imr}, {omr}")));
    }
    let total: f64 = at_risk.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroAtRisk);
    }
    let (out_schedule, schedule_fallback) = if meta.is_gcc() {
        let shares: Vec<f64> = (0..ages.len()).map(|a| (at_risk[2 * a] + at_risk[2 * a + 1]) / total).collect();
        gcc_outflow_schedule(&shares, schedule, ages)?
    } else {
        (schedule.clone(), false)
    };
    let total_in = rate_to_count(imr, total);
    let total_out = rate_to_count(omr, total);
    let mut flows = FlowCells::zeros(at_risk.len());
    for a in 0..ages.len() {
        let split = sex_split(at_risk, a);
        for s in 0..2 {
            flows.inflow[2 * a + s] = total_in * schedule.weights()[a] * split[s];
            flows.outflow[2 * a + s] = total_out * out_schedule.weights()[a] * split[s];
        }
    }
    let lost_outflow = cap_and_redistribute(&mut flows.outflow, at_risk);
    Ok(Disaggregated {
        flows,
        lost_outflow,
        schedule_fallback,
    })
}

/// `P_{t+5} = P̃ + I − O` cell-wise, clamped at zero. Returns the new cells
/// and the clamped mass.
pub fn apply_migration(at_risk: &[f64], flows: &FlowCells) -> (Vec<f64>, f64) {
    let mut clamped = 0.0;
    let cells = at_risk
        .iter()
        .zip(&flows.inflow)
        .zip(&flows.outflow)
        .map(|((p, i), o)| {
            let v = p + i - o;
            if v < 0.0 {
                clamped -= v;
                0.0
            } else {
                v
            }
        })
        .collect();
    (cells, clamped)
}
