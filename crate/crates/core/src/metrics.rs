//! Point-prediction error metrics in original target units.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} targets vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("cannot evaluate an empty prediction set")]
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    /// Percent. `None` when some target is exactly zero.
    pub mape: Option<f64>,
}

pub fn evaluate(y_true: &[f64], y_pred: &[f64]) -> Result<MetricSet, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = y_true.len() as f64;
    let (mut se, mut ae, mut ape) = (0.0, 0.0, 0.0);
    let mut mape_defined = true;
    for (t, p) in y_true.iter().zip(y_pred) {
        let e = p - t;
        se += e * e;
        ae += e.abs();
        if *t == 0.0 {
            mape_defined = false;
        } else {
            ape += (e / t).abs();
        }
    }
    let mse = se / n;
    Ok(MetricSet {
        mse,
        rmse: mse.sqrt(),
        mae: ae / n,
        mape: mape_defined.then(|| 100.0 * ape / n),
    })
}

/// Field-wise mean of per-run metrics. MAPE is averaged over the runs that
/// define it.
pub fn mean_metrics(runs: &[MetricSet]) -> Option<MetricSet> {
    if runs.is_empty() {
        return None;
    }
    let n = runs.len() as f64;
    let mapes: Vec<f64> = runs.iter().filter_map(|m| m.mape).collect();
    Some(MetricSet {
        mse: runs.iter().map(|m| m.mse).sum::<f64>() / n,
        rmse: runs.iter().map(|m| m.rmse).sum::<f64>() / n,
        mae: runs.iter().map(|m| m.mae).sum::<f64>() / n,
        mape: (!mapes.is_empty()).then(|| mapes.iter().sum::<f64>() / mapes.len() as f64),
    })
}
