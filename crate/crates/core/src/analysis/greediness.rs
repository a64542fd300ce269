use serde::{Deserialize, Serialize};

use crate::trainer::DiagnosticsTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedinessReport {
    /// 1-indexed; `None` if the loss never fell to a tenth of its first value.
    pub decay_epoch: Option<usize>,
    pub mean_active_ratio: f64,
    pub mean_grad_norm: f64,
    pub window: usize,
}

/// First epoch (1-indexed) whose mean loss is at most 10% of the first
/// epoch's.
pub fn loss_decay_epoch(trace: &DiagnosticsTrace) -> Option<usize> {
    let losses = trace.losses();
    let first = *losses.first()?;
    let target = 0.1 * first;
    losses.iter().position(|&l| l <= target).map(|i| i + 1)
}

/// Means over the final `window` epochs. A window longer than the trace is
/// clamped to the trace length.
pub fn greediness_report(trace: &DiagnosticsTrace, window: usize) -> GreedinessReport {
    let n = trace.records.len();
    let window = window.max(1).min(n);
    let tail = &trace.records[n - window..];
    let mean = |f: fn(&crate::trainer::EpochRecord) -> f64| {
        if tail.is_empty() {
            0.0
        } else {
            tail.iter().map(f).sum::<f64>() / tail.len() as f64
        }
    };
    GreedinessReport {
        decay_epoch: loss_decay_epoch(trace),
        mean_active_ratio: mean(|r| r.active_ratio),
        mean_grad_norm: mean(|r| r.grad_norm),
        window,
    }
}
