use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datagen::OUTLIER;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// Within-class spread and between-class separation of an embedding set.
///
/// `intra_mean` and `inter_mean_sq` are the class-averaged variance and the
/// mean squared centroid separation:
///
/// ```text
/// intra      = 1/C Σ_c 1/N_c Σ_{i∈c} ‖z_i − μ_c‖²
/// inter_sq   = 1/(C(C−1)) Σ_{c≠c'} ‖μ_c − μ_c'‖²
/// ```
///
/// `intra_var` is the (population) variance of the per-class values across
/// classes; `inter_mean_dist` / `inter_var` are the mean and population
/// variance of the unsquared centroid distances over class pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub per_class_intra: BTreeMap<i32, f64>,
    pub intra_mean: f64,
    pub intra_var: f64,
    pub inter_mean_sq: f64,
    pub inter_mean_dist: f64,
    pub inter_var: f64,
    pub num_classes: usize,
}

impl VarianceReport {
    /// Per-class intra variances in ascending class order.
    pub fn intra_values(&self) -> Vec<f64> {
        self.per_class_intra.values().copied().collect()
    }
}

/// Outliers (label −1) are ignored. Needs at least two classes, each with
/// at least two samples.
pub fn variance_report(embeddings: &Tensor, labels: &[i32]) -> Result<VarianceReport> {
    let [n, d] = embeddings.dims2()?;
    if n != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{n} embeddings but {} labels",
            labels.len()
        )));
    }
    let mut members: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l != OUTLIER {
            members.entry(l).or_default().push(i);
        }
    }
    if members.len() < 2 {
        return Err(Error::TooFewClasses(members.len()));
    }
    if let Some((&class, idx)) = members.iter().find(|(_, idx)| idx.len() < 2) {
        return Err(Error::TooFewSamples {
            class,
            count: idx.len(),
        });
    }

    let mut centroids = Vec::with_capacity(members.len());
    let mut per_class_intra = BTreeMap::new();
    for (&class, idx) in &members {
        let mut mu = vec![0.0; d];
        for &i in idx {
            mu.iter_mut().zip(embeddings.row(i)).for_each(|(m, z)| *m += z);
        }
        let inv = 1.0 / idx.len() as f64;
        mu.iter_mut().for_each(|m| *m *= inv);
        let spread = idx
            .iter()
            .map(|&i| sq_dist(embeddings.row(i), &mu))
            .sum::<f64>()
            * inv;
        per_class_intra.insert(class, spread);
        centroids.push(mu);
    }

    let c = centroids.len();
    let intra: Vec<f64> = per_class_intra.values().copied().collect();
    let (intra_mean, intra_var) = mean_var(&intra);

    let mut pair_sq = Vec::with_capacity(c * (c - 1) / 2);
    for a in 0..c {
        for b in a + 1..c {
            pair_sq.push(sq_dist(&centroids[a], &centroids[b]));
        }
    }
    // Each unordered pair appears twice among ordered pairs, which the
    // 1/(C(C−1)) normalization absorbs.
    let inter_mean_sq = 2.0 * pair_sq.iter().sum::<f64>() / (c * (c - 1)) as f64;
    let dists: Vec<f64> = pair_sq.iter().map(|v| v.sqrt()).collect();
    let (inter_mean_dist, inter_var) = mean_var(&dists);

    Ok(VarianceReport {
        per_class_intra,
        intra_mean,
        intra_var,
        inter_mean_sq,
        inter_mean_dist,
        inter_var,
        num_classes: c,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}
