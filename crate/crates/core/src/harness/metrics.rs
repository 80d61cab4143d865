use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    pub n_cells: usize,
}

/// MAE and RMSE over every (tract, hour) cell whose tract is in `mask`
/// (all tracts when `None`).
pub fn evaluate(pred: &[Vec<f64>], obs: &[Vec<f64>], mask: Option<&[bool]>) -> Result<Metrics> {
    if pred.len() != obs.len() {
        return Err(Error::Dimension {
            context: "evaluate tracts",
            expected: obs.len().to_string(),
            actual: pred.len().to_string(),
        });
    }
    if let Some(m) = mask {
        if m.len() != obs.len() {
            return Err(Error::Dimension {
                context: "evaluate mask",
                expected: obs.len().to_string(),
                actual: m.len().to_string(),
            });
        }
    }
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut n = 0usize;
    for (k, (p, o)) in pred.iter().zip(obs).enumerate() {
        if mask.is_some_and(|m| !m[k]) {
            continue;
        }
        if p.len() != o.len() {
            return Err(Error::Dimension {
                context: "evaluate hours",
                expected: o.len().to_string(),
                actual: p.len().to_string(),
            });
        }
        for (&a, &b) in p.iter().zip(o) {
            let e = a - b;
            abs += e.abs();
            sq += e * e;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("no cells to evaluate"));
    }
    let mae = abs / n as f64;
    // rounding can put sqrt(mean square) a hair under the mean absolute
    // error when all errors are equal; the identity RMSE >= MAE is exact
    let rmse = (sq / n as f64).sqrt().max(mae);
    Ok(Metrics { mae, rmse, n_cells: n })
}

/// Cell-weighted pooling of per-day metrics.
pub fn pool(days: &[Metrics]) -> Option<Metrics> {
    let n: usize = days.iter().map(|m| m.n_cells).sum();
    if n == 0 {
        return None;
    }
    let abs: f64 = days.iter().map(|m| m.mae * m.n_cells as f64).sum();
    let sq: f64 = days.iter().map(|m| m.rmse * m.rmse * m.n_cells as f64).sum();
    let mae = abs / n as f64;
    Some(Metrics {
        mae,
        rmse: (sq / n as f64).sqrt().max(mae),
        n_cells: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayMetrics {
    pub day: usize,
    pub date: String,
    pub all: Metrics,
    pub masked: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: String,
    pub model: String,
    pub delay_hours: usize,
    pub seed: u64,
    pub config_hash: String,
    /// Tracts in the masked subset (those that received an order or warning).
    pub mask: Vec<String>,
    pub days: Vec<DayMetrics>,
    pub aggregate: Metrics,
    pub aggregate_masked: Option<Metrics>,
}

impl EvalReport {
    /// `rmse >= mae >= 0` on every entry.
    pub fn is_consistent(&self) -> bool {
        let ok = |m: &Metrics| m.mae >= 0.0 && m.rmse >= m.mae;
        ok(&self.aggregate)
            && self.aggregate_masked.as_ref().is_none_or(ok)
            && self.days.iter().all(|d| ok(&d.all) && d.masked.as_ref().is_none_or(ok))
    }
}
