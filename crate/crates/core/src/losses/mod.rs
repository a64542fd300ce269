//! Contrastive and triplet losses over L2-normalized embeddings, with their
//! gradients with respect to the embeddings, plus pair/triplet sampling.
//!
//! Contrastive, per pair at Euclidean distance `d`:
//! `d²` for positives, `[m − d]₊²` for negatives.
//!
//! Triplet, per `(a, p, n)`: `[‖a − p‖² − ‖a − n‖² + m]₊`.
//!
//! The batch loss is the mean over items.

mod sampling;

use serde::{Deserialize, Serialize};

pub(crate) use sampling::batch_is_feasible;
pub use sampling::{sample_pairs, sample_triplets};

use crate::error::{Error, Result};
use crate::numcore::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Contrastive,
    Triplet,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Contrastive => "contrastive",
            LossKind::Triplet => "triplet",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contrastive" => Ok(LossKind::Contrastive),
            "triplet" => Ok(LossKind::Triplet),
            other => Err(Error::Validation(format!("unknown loss `{other}`"))),
        }
    }
}

/// Pairs of rows in an embedding batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub anchor_idx: Vec<usize>,
    pub other_idx: Vec<usize>,
    pub is_positive: Vec<bool>,
    pub margin: f64,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.anchor_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchor_idx.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletBatch {
    pub anchor_idx: Vec<usize>,
    pub positive_idx: Vec<usize>,
    pub negative_idx: Vec<usize>,
    pub margin: f64,
}

impl TripletBatch {
    pub fn len(&self) -> usize {
        self.anchor_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchor_idx.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Mean of `per_item`.
    pub total: f64,
    pub per_item: Vec<f64>,
    /// `per_item[i] > 0`.
    pub active_mask: Vec<bool>,
    /// d(total)/d(embeddings), same shape as the embedding batch.
    pub grad_embeddings: Tensor,
}

impl LossOutput {
    pub fn active_ratio(&self) -> f64 {
        if self.per_item.is_empty() {
            return 0.0;
        }
        self.active_mask.iter().filter(|&&a| a).count() as f64 / self.per_item.len() as f64
    }

    fn finish(per_item: Vec<f64>, grad_embeddings: Tensor) -> Self {
        let total = per_item.iter().sum::<f64>() / per_item.len().max(1) as f64;
        let active_mask = per_item.iter().map(|&l| l > 0.0).collect();
        Self {
            total,
            per_item,
            active_mask,
            grad_embeddings,
        }
    }
}

/// Negative pairs closer than this get a zero gradient (the direction of
/// separation is undefined at coincidence).
const COINCIDENT: f64 = 1e-12;

pub fn contrastive_loss(embeddings: &Tensor, batch: &PairBatch) -> Result<LossOutput> {
    let [n, d] = embeddings.dims2()?;
    check_lengths(batch.len(), &[batch.other_idx.len(), batch.is_positive.len()])?;
    check_indices(n, batch.anchor_idx.iter().chain(&batch.other_idx))?;
    let m = batch.len();
    let scale = 1.0 / m.max(1) as f64;
    let mut grad = Tensor::zeros(&[n, d]);
    let mut per_item = Vec::with_capacity(m);
    let mut diff = vec![0.0; d];

    for k in 0..m {
        let (a, o) = (batch.anchor_idx[k], batch.other_idx[k]);
        sub_into(embeddings.row(a), embeddings.row(o), &mut diff);
        let dist_sq: f64 = diff.iter().map(|v| v * v).sum();
        // coefficient c such that dL/de_a = c·diff and dL/de_o = -c·diff
        let (loss, coef) = if batch.is_positive[k] {
            (dist_sq, 2.0)
        } else {
            let dist = dist_sq.sqrt();
            let gap = batch.margin - dist;
            if gap > 0.0 {
                let coef = if dist > COINCIDENT { -2.0 * gap / dist } else { 0.0 };
                (gap * gap, coef)
            } else {
                (0.0, 0.0)
            }
        };
        per_item.push(loss);
        if coef != 0.0 {
            let c = coef * scale;
            axpy(grad.row_mut(a), c, &diff);
            axpy(grad.row_mut(o), -c, &diff);
        }
    }
    Ok(LossOutput::finish(per_item, grad))
}

pub fn triplet_loss(embeddings: &Tensor, batch: &TripletBatch) -> Result<LossOutput> {
    let [n, d] = embeddings.dims2()?;
    check_lengths(batch.len(), &[batch.positive_idx.len(), batch.negative_idx.len()])?;
    check_indices(
        n,
        batch
            .anchor_idx
            .iter()
            .chain(&batch.positive_idx)
            .chain(&batch.negative_idx),
    )?;
    let m = batch.len();
    let scale = 1.0 / m.max(1) as f64;
    let mut grad = Tensor::zeros(&[n, d]);
    let mut per_item = Vec::with_capacity(m);
    let mut ap = vec![0.0; d];
    let mut an = vec![0.0; d];

    for k in 0..m {
        let (a, p, q) = (batch.anchor_idx[k], batch.positive_idx[k], batch.negative_idx[k]);
        sub_into(embeddings.row(a), embeddings.row(p), &mut ap);
        sub_into(embeddings.row(a), embeddings.row(q), &mut an);
        let d_ap: f64 = ap.iter().map(|v| v * v).sum();
        let d_an: f64 = an.iter().map(|v| v * v).sum();
        let z = d_ap - d_an + batch.margin;
        if z > 0.0 {
            per_item.push(z);
            let c = 2.0 * scale;
            // ∂/∂a = 2(a−p) − 2(a−n), ∂/∂p = −2(a−p), ∂/∂n = 2(a−n)
            axpy(grad.row_mut(a), c, &ap);
            axpy(grad.row_mut(a), -c, &an);
            axpy(grad.row_mut(p), -c, &ap);
            axpy(grad.row_mut(q), c, &an);
        } else {
            per_item.push(0.0);
        }
    }
    Ok(LossOutput::finish(per_item, grad))
}

fn sub_into(x: &[f64], y: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
        *o = a - b;
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yv, xv)| *yv += a * xv);
}

fn check_lengths(len: usize, others: &[usize]) -> Result<()> {
    if others.iter().any(|&l| l != len) {
        return Err(Error::ShapeMismatch("index lists differ in length".into()));
    }
    Ok(())
}

fn check_indices<'a>(n: usize, mut idx: impl Iterator<Item = &'a usize>) -> Result<()> {
    match idx.find(|&&i| i >= n) {
        Some(&index) => Err(Error::IndexOutOfRange { index, len: n }),
        None => Ok(()),
    }
}
