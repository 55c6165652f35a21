use crate::error::{Error, Result};
use crate::project::flows::FlowCells;

/// Maximum number of passes shifting unplaceable residuals between the
/// inflow and outflow sides.
pub const MAX_PASSES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RebalanceReport {
    pub passes: usize,
    /// Some adjustment hit zero and was re-spread.
    pub clamped: bool,
    /// Largest `|Σ I − Σ O|` left in any cell and partition.
    pub max_residual: f64,
}

/// Add `delta` to `values` in proportion to `weights`, never going below
/// zero. Negative overshoot is re-spread over cells that still hold mass.
/// Returns the part of `delta` that could not be applied.
fn spread(values: &mut [f64], weights: &[f64], delta: f64, clamped: &mut bool) -> f64 {
    let mut remaining = delta;
    let mut free: Vec<usize> = (0..values.len()).collect();
    let tol = 1e-15 * values.iter().sum::<f64>().abs().max(delta.abs()).max(1.0);
    for _ in 0..=values.len() {
        if remaining.abs() <= tol || free.is_empty() {
            break;
        }
        if remaining < 0.0 {
            free.retain(|&k| values[k] > 0.0);
            if free.is_empty() {
                break;
            }
        }
        let mut w: Vec<f64> = free.iter().map(|&k| weights[k]).collect();
        if w.iter().sum::<f64>() <= 0.0 {
            w = if remaining < 0.0 {
                free.iter().map(|&k| values[k]).collect()
            } else {
                vec![1.0; free.len()]
            };
        }
        let sum: f64 = w.iter().sum();
        let mut overshoot = 0.0;
        for (&k, wk) in free.iter().zip(w) {
            values[k] += remaining * wk / sum;
            if values[k] < 0.0 {
                overshoot += values[k];
                values[k] = 0.0;
                *clamped = true;
            }
        }
        remaining = overshoot;
    }
    remaining
}

/// Adjust flows so that inflows equal outflows in every `(age, sex)` cell
/// within each partition. The imbalance `D = Σ I − Σ O` is removed by
/// moving inflows by `−w·D` and outflows by `(1 − w)·D`, spread across
/// countries in proportion to their at-risk population. Adjustments that
/// would push a flow below zero are re-spread over the other countries, and
/// when one side is exhausted the residual moves to the other side.
///
/// Inactive countries are left untouched and do not take part.
pub fn rebalance_global(
    flows: &mut [FlowCells],
    at_risk: &[&[f64]],
    partition: &[usize],
    active: &[bool],
    w: f64,
) -> Result<RebalanceReport> {
    let n = flows.len();
    if at_risk.len() != n || partition.len() != n || active.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: at_risk.len().min(partition.len()).min(active.len()),
        });
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidArgument(format!("rebalancing weight {w} outside [0, 1]")));
    }
    let mut report = RebalanceReport::default();
    let Some(n_cells) = flows.iter().zip(active).find(|(_, &a)| a).map(|(f, _)| f.inflow.len()) else {
        return Ok(report);
    };
    let n_parts = partition.iter().copied().max().unwrap_or(0) + 1;
    for g in 0..n_parts {
        let members: Vec<usize> = (0..n).filter(|&i| active[i] && partition[i] == g).collect();
        if members.is_empty() {
            continue;
        }
        let mut inflow = vec![0.0; members.len()];
        let mut outflow = vec![0.0; members.len()];
        let mut weight = vec![0.0; members.len()];
        for k in 0..n_cells {
            for (m, &i) in members.iter().enumerate() {
                inflow[m] = flows[i].inflow[k];
                outflow[m] = flows[i].outflow[k];
                weight[m] = at_risk[i][k];
            }
            let scale = inflow.iter().sum::<f64>().max(outflow.iter().sum::<f64>()).max(1.0);
            let tol = 1e-12 * scale;
            let imbalance = |i: &[f64], o: &[f64]| i.iter().sum::<f64>() - o.iter().sum::<f64>();
            let d = imbalance(&inflow, &outflow);
            let mut passes = 0;
            if d.abs() > tol {
                let left_in = spread(&mut inflow, &weight, -w * d, &mut report.clamped);
                let left_out = spread(&mut outflow, &weight, (1.0 - w) * d, &mut report.clamped);
                passes = 1;
                if left_in != 0.0 || left_out != 0.0 {
                    while passes < MAX_PASSES {
                        let d = imbalance(&inflow, &outflow);
                        if d.abs() <= tol {
                            break;
                        }
                        passes += 1;
                        // Whichever side can absorb the change takes it: a
                        // positive imbalance either lowers inflows or raises
                        // outflows; increases always succeed.
                        let left = spread(&mut inflow, &weight, -d, &mut report.clamped);
                        if left != 0.0 {
                            spread(&mut outflow, &weight, -left, &mut report.clamped);
                        }
                    }
                }
            }
            report.passes = report.passes.max(passes);
            report.max_residual = report.max_residual.max(imbalance(&inflow, &outflow).abs());
            for (m, &i) in members.iter().enumerate() {
                flows[i].inflow[k] = inflow[m];
                flows[i].outflow[k] = outflow[m];
            }
        }
    }
    Ok(report)
}
