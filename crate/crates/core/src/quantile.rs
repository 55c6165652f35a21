//! Sample quantiles by linear interpolation between order statistics
//! (Hyndman and Fan type 7, the R and NumPy default).

/// Quantile of already sorted data. Returns NaN for empty input.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

/// Several quantiles with a single sort.
pub fn quantiles(values: &[f64], ps: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    ps.iter().map(|&p| quantile_sorted(&v, p)).collect()
}

/// Central interval `(lower, upper)` at the given level, e.g. 0.95.
pub fn central_interval(values: &[f64], level: f64) -> (f64, f64) {
    let tail = (1.0 - level) / 2.0;
    let q = quantiles(values, &[tail, 1.0 - tail]);
    (q[0], q[1])
}
