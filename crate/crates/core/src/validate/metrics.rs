use crate::error::{Error, Result};
use crate::panel::RatePanel;
use crate::PERIOD_YEARS;

fn check_lengths(f: &[f64], r: &[f64]) -> Result<()> {
    if f.len() != r.len() {
        return Err(Error::LengthMismatch {
            left: f.len(),
            right: r.len(),
        });
    }
    if f.is_empty() {
        return Err(Error::InvalidArgument("no cells to score".into()));
    }
    Ok(())
}

pub fn mae(forecasts: &[f64], truths: &[f64]) -> Result<f64> {
    check_lengths(forecasts, truths)?;
    Ok(forecasts.iter().zip(truths).map(|(f, r)| (f - r).abs()).sum::<f64>() / forecasts.len() as f64)
}

/// `l(y) = sign(y) · (ln(|y| + c) − ln c)`
pub fn log_transform(y: f64, c: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else {
        y.signum() * ((y.abs() + c).ln() - c.ln())
    }
}

/// Mean absolute difference of log-transformed forecasts and truths.
pub fn lmae(forecasts: &[f64], truths: &[f64], c: f64) -> Result<f64> {
    check_lengths(forecasts, truths)?;
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("LMAE offset must be positive, got {c}")));
    }
    Ok(forecasts
        .iter()
        .zip(truths)
        .map(|(f, r)| (log_transform(*f, c) - log_transform(*r, c)).abs())
        .sum::<f64>()
        / forecasts.len() as f64)
}

/// Absolute `k`-period naive persistence errors `|r_{i,s+5k} − r_{i,s}|`
/// for every country and in-sample origin `s` where both cells exist.
pub fn naive_errors(in_sample: &RatePanel, origins: &[i32], k: usize) -> Vec<f64> {
    let periods = in_sample.periods();
    let step = k as i32 * PERIOD_YEARS as i32;
    let mut out = Vec::new();
    for i in 0..in_sample.n_countries() {
        for &s in origins {
            let (Some(a), Some(b)) = (periods.index_of(s), periods.index_of(s + step)) else {
                continue;
            };
            if let (Some(x), Some(y)) = (in_sample.get(i, a), in_sample.get(i, b)) {
                out.push((y - x).abs());
            }
        }
    }
    out
}

/// Mean in-sample naive error, `None` when it is zero or there are no
/// cells.
pub fn mase_denominator(in_sample: &RatePanel, origins: &[i32], k: usize) -> Option<f64> {
    let e = naive_errors(in_sample, origins, k);
    if e.is_empty() {
        return None;
    }
    let d = e.iter().sum::<f64>() / e.len() as f64;
    (d > 0.0).then_some(d)
}

/// Mean absolute `k`-step forecast error over the out-of-sample cells,
/// divided by the mean absolute `k`-step persistence error over the
/// in-sample origins. `None` marks an undefined ratio (constant in-sample
/// series).
pub fn mase(forecasts: &[f64], truths: &[f64], in_sample: &RatePanel, origins: &[i32], k: usize) -> Result<Option<f64>> {
    let num = mae(forecasts, truths)?;
    Ok(mase_denominator(in_sample, origins, k).map(|d| num / d))
}

/// Share (percent) of truths inside their interval and the mean
/// half-width `(hi − lo) / 2`.
pub fn coverage_and_halfwidth(intervals: &[(f64, f64)], truths: &[f64]) -> Result<(f64, f64)> {
    if intervals.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: intervals.len(),
            right: truths.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::InvalidArgument("no cells to score".into()));
    }
    let mut inside = 0usize;
    let mut width = 0.0;
    for (&(lo, hi), &r) in intervals.iter().zip(truths) {
        if lo > hi {
            return Err(Error::InvalidArgument(format!("interval [{lo}, {hi}] is reversed")));
        }
        if lo <= r && r <= hi {
            inside += 1;
        }
        width += (hi - lo) / 2.0;
    }
    let n = truths.len() as f64;
    Ok((100.0 * inside as f64 / n, width / n))
}
