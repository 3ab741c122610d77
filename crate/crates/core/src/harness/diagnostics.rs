use serde::Serialize;

use crate::error::{config, invalid, Result};
use crate::selection::SystemId;

/// True values of an instance and the quantities that govern its difficulty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceDiagnostics {
    /// `v_i` in system order.
    pub values: Vec<f64>,
    /// `v_best - v_i` in system order.
    pub gaps: Vec<f64>,
    /// `max_{i >= 2} i / gap_(i)^2` over systems ranked by value.
    pub h2: f64,
    pub best: SystemId,
}

impl InstanceDiagnostics {
    /// Systems from best to worst.
    pub fn ranking(&self) -> Vec<SystemId> {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        order.into_iter().map(SystemId::from_zero_based).collect()
    }
}

/// Builds diagnostics, rejecting instances whose top two values are closer
/// than `min_gap` (the best system would not be unique).
pub fn diagnostics(values: &[f64], min_gap: f64) -> Result<InstanceDiagnostics> {
    if values.len() < 2 {
        return Err(invalid("diagnostics need at least two systems"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("true values must be finite"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top_gap = sorted[0] - sorted[1];
    if !(top_gap >= min_gap && top_gap > 0.0) {
        return Err(config(format!(
            "no unique best system: top two values differ by {top_gap:e}, below the minimum gap {min_gap:e}"
        )));
    }
    let best_index = values
        .iter()
        .position(|&v| v == sorted[0])
        .expect("maximum is present");
    let gaps: Vec<f64> = values.iter().map(|v| sorted[0] - v).collect();
    let h2 = sorted
        .iter()
        .enumerate()
        .skip(1)
        .map(|(r, v)| (r + 1) as f64 / (sorted[0] - v).powi(2))
        .fold(0.0, f64::max);
    Ok(InstanceDiagnostics {
        values: values.to_vec(),
        gaps,
        h2,
        best: SystemId::from_zero_based(best_index),
    })
}
