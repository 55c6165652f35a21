use crate::error::{Error, Result};
use crate::grid::Sex;
use crate::project::vitals::VitalView;
use crate::PERIOD_YEARS;

/// One five-year cohort-component step without migration.
///
/// `cells` holds the start-of-period population in `(age, sex)` order. Each
/// group ages into the next; the top group is open. Births over the period
/// are `5 · Σ_a f_a · (W_a(start) + W_a(end)) / 2` and enter the first group
/// after birth survival.
pub fn project_no_migration(cells: &[f64], vitals: &VitalView<'_>) -> Result<Vec<f64>> {
    let n_a = cells.len() / 2;
    if cells.len() != 2 * n_a || n_a < 2 || vitals.survival.len() != cells.len() || vitals.fertility.len() != n_a {
        return Err(Error::GridMismatch {
            expected: vitals.survival.len(),
            got: cells.len(),
        });
    }
    let mut out = vec![0.0; cells.len()];
    for s in Sex::ALL {
        let s_ = s as usize;
        for a in 0..n_a - 1 {
            out[2 * (a + 1) + s_] += vitals.survival(a, s) * cells[2 * a + s_];
        }
        out[2 * (n_a - 1) + s_] += vitals.survival(n_a - 1, s) * cells[2 * (n_a - 1) + s_];
    }
    let female = Sex::Female as usize;
    let births: f64 = PERIOD_YEARS
        * (0..n_a)
            .map(|a| vitals.fertility[a] * 0.5 * (cells[2 * a + female] + out[2 * a + female]))
            .sum::<f64>();
    let srb = vitals.sex_ratio_at_birth;
    out[Sex::Male as usize] = births * srb / (1.0 + srb) * vitals.birth_survival[Sex::Male as usize];
    out[female] = births / (1.0 + srb) * vitals.birth_survival[female];
    Ok(out)
}
