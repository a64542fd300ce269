//! Pair and triplet sampling within a mini-batch.
//!
//! `labels` holds the labels of the whole dataset and `batch` the dataset
//! indices that make up the mini-batch. Returned indices are positions in
//! `batch`, i.e. rows of the batch's embedding tensor. One pair or triplet
//! is emitted per batch slot.

use std::collections::BTreeMap;

use super::{PairBatch, TripletBatch};
use crate::datagen::OUTLIER;
use crate::error::{Error, Result};
use crate::numcore::RngStream;

struct BatchIndex {
    labels: Vec<i32>,
    by_class: BTreeMap<i32, Vec<usize>>,
}

impl BatchIndex {
    fn new(labels: &[i32], batch: &[usize]) -> Result<Self> {
        let labels: Vec<i32> = batch
            .iter()
            .map(|&i| {
                labels.get(i).copied().ok_or(Error::IndexOutOfRange {
                    index: i,
                    len: labels.len(),
                })
            })
            .collect::<Result<_>>()?;
        let mut by_class: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (pos, &l) in labels.iter().enumerate() {
            if l != OUTLIER {
                by_class.entry(l).or_default().push(pos);
            }
        }
        Ok(Self { labels, by_class })
    }

    /// Positions that have a same-class partner and at least one sample
    /// with a different label in the batch.
    fn anchors(&self) -> Vec<usize> {
        let n = self.labels.len();
        (0..n)
            .filter(|&p| {
                let l = self.labels[p];
                l != OUTLIER
                    && self.by_class[&l].len() >= 2
                    && self.by_class[&l].len() < n
            })
            .collect()
    }

    fn positive_for(&self, anchor: usize, rng: &mut RngStream) -> usize {
        let same = &self.by_class[&self.labels[anchor]];
        // uniform over the class members other than the anchor
        let k = rng.below(same.len() - 1);
        let slot = same.iter().position(|&p| p == anchor).expect("anchor in class");
        same[if k >= slot { k + 1 } else { k }]
    }

    fn negatives_for(&self, anchor: usize) -> Vec<usize> {
        let la = self.labels[anchor];
        (0..self.labels.len())
            .filter(|&q| {
                let lq = self.labels[q];
                lq != la && !(lq == OUTLIER && la == OUTLIER)
            })
            .collect()
    }
}

fn infeasible(what: &str) -> Error {
    Error::InfeasibleBatch(what.to_string())
}

/// Half the slots (rounded down) become positive pairs, the rest negative
/// pairs. Positives pair two distinct non-outlier samples of one class;
/// negatives pair two samples with different labels, so an outlier can only
/// appear in negatives and never alongside another outlier.
pub fn sample_pairs(
    labels: &[i32],
    batch: &[usize],
    margin: f64,
    rng: &mut RngStream,
) -> Result<PairBatch> {
    let index = BatchIndex::new(labels, batch)?;
    let pos_anchors: Vec<usize> = (0..batch.len())
        .filter(|&p| index.labels[p] != OUTLIER && index.by_class[&index.labels[p]].len() >= 2)
        .collect();
    if pos_anchors.is_empty() {
        return Err(infeasible("no two non-outlier samples share a class"));
    }
    let neg_anchors: Vec<(usize, Vec<usize>)> = (0..batch.len())
        .map(|p| (p, index.negatives_for(p)))
        .filter(|(_, partners)| !partners.is_empty())
        .collect();
    if neg_anchors.is_empty() {
        return Err(infeasible("no two samples carry different labels"));
    }

    let m = batch.len();
    let n_pos = m / 2;
    let mut out = PairBatch {
        anchor_idx: Vec::with_capacity(m),
        other_idx: Vec::with_capacity(m),
        is_positive: Vec::with_capacity(m),
        margin,
    };
    for _ in 0..n_pos {
        let a = pos_anchors[rng.below(pos_anchors.len())];
        let p = index.positive_for(a, rng);
        out.anchor_idx.push(a);
        out.other_idx.push(p);
        out.is_positive.push(true);
    }
    for _ in n_pos..m {
        let (a, partners) = &neg_anchors[rng.below(neg_anchors.len())];
        let o = partners[rng.below(partners.len())];
        out.anchor_idx.push(*a);
        out.other_idx.push(o);
        out.is_positive.push(false);
    }
    Ok(out)
}

/// Uniformly random valid triplets, one per slot: anchor uniform over
/// eligible positions, then a uniform same-class positive and a uniform
/// negative with a different label (outliers allowed as negatives only).
pub fn sample_triplets(
    labels: &[i32],
    batch: &[usize],
    margin: f64,
    rng: &mut RngStream,
) -> Result<TripletBatch> {
    let index = BatchIndex::new(labels, batch)?;
    let anchors = index.anchors();
    if anchors.is_empty() {
        return Err(infeasible("no sample has both a positive and a negative partner"));
    }
    let m = batch.len();
    let mut out = TripletBatch {
        anchor_idx: Vec::with_capacity(m),
        positive_idx: Vec::with_capacity(m),
        negative_idx: Vec::with_capacity(m),
        margin,
    };
    for _ in 0..m {
        let a = anchors[rng.below(anchors.len())];
        let p = index.positive_for(a, rng);
        let negs = index.negatives_for(a);
        let q = negs[rng.below(negs.len())];
        out.anchor_idx.push(a);
        out.positive_idx.push(p);
        out.negative_idx.push(q);
    }
    Ok(out)
}

/// Whether both samplers can produce at least one item for this batch.
pub(crate) fn batch_is_feasible(labels: &[i32], batch: &[usize]) -> bool {
    BatchIndex::new(labels, batch)
        .map(|idx| !idx.anchors().is_empty())
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels64() -> Vec<i32> {
        (0..64).map(|i| if i % 9 == 8 { OUTLIER } else { (i % 4) as i32 }).collect()
    }

    #[test]
    fn half_positive_half_negative() {
        let labels = labels64();
        let batch: Vec<usize> = (0..64).collect();
        let pairs = sample_pairs(&labels, &batch, 1.0, &mut RngStream::new(1)).unwrap();
        assert_eq!(pairs.len(), 64);
        assert_eq!(pairs.is_positive.iter().filter(|&&p| p).count(), 32);
        for k in 0..64 {
            let (la, lo) = (labels[pairs.anchor_idx[k]], labels[pairs.other_idx[k]]);
            if pairs.is_positive[k] {
                assert_eq!(la, lo);
                assert_ne!(la, OUTLIER);
                assert_ne!(pairs.anchor_idx[k], pairs.other_idx[k]);
            } else {
                assert_ne!(la, lo);
            }
        }
    }

    #[test]
    fn singleton_class_plus_outliers_is_infeasible() {
        let labels = vec![3, OUTLIER, OUTLIER, OUTLIER];
        let batch = vec![0, 1, 2, 3];
        let mut rng = RngStream::new(0);
        assert!(matches!(
            sample_pairs(&labels, &batch, 1.0, &mut rng),
            Err(Error::InfeasibleBatch(_))
        ));
        assert!(matches!(
            sample_triplets(&labels, &batch, 1.0, &mut rng),
            Err(Error::InfeasibleBatch(_))
        ));
    }

    #[test]
    fn triplets_respect_roles() {
        let labels = vec![0, 0, 1, 1];
        let batch = vec![0, 1, 2, 3];
        let t = sample_triplets(&labels, &batch, 1.0, &mut RngStream::new(4)).unwrap();
        assert_eq!(t.len(), 4);
        for k in 0..4 {
            assert_eq!(labels[t.anchor_idx[k]], labels[t.positive_idx[k]]);
            assert_ne!(t.anchor_idx[k], t.positive_idx[k]);
            assert_ne!(labels[t.anchor_idx[k]], labels[t.negative_idx[k]]);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let labels = labels64();
        let batch: Vec<usize> = (0..64).rev().collect();
        let a = sample_triplets(&labels, &batch, 1.0, &mut RngStream::new(8)).unwrap();
        let b = sample_triplets(&labels, &batch, 1.0, &mut RngStream::new(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn positions_refer_to_batch_slots() {
        let labels = vec![5, 5, 5, 1, 1, 7, 7];
        let batch = vec![3, 4, 5, 6];
        let t = sample_triplets(&labels, &batch, 1.0, &mut RngStream::new(2)).unwrap();
        assert!(t.anchor_idx.iter().all(|&p| p < 4));
    }

    #[test]
    fn anchor_frequency_is_uniform() {
        // Eligible anchors are every non-outlier position.
        let labels: Vec<i32> = vec![0, 0, 0, 1, 1, 2, 2, 2, OUTLIER];
        let batch: Vec<usize> = (0..labels.len()).collect();
        let mut rng = RngStream::new(12);
        let mut counts = [0usize; 9];
        let rounds = 2000;
        for _ in 0..rounds {
            let t = sample_triplets(&labels, &batch, 1.0, &mut rng).unwrap();
            t.anchor_idx.iter().for_each(|&a| counts[a] += 1);
        }
        let total = (rounds * labels.len()) as f64;
        let p = 1.0 / 8.0;
        let se = (total * p * (1.0 - p)).sqrt();
        for (pos, &c) in counts.iter().enumerate().take(8) {
            assert!(
                (c as f64 - total * p).abs() <= 3.0 * se,
                "position {pos}: {c} vs {}",
                total * p
            );
        }
        assert_eq!(counts[8], 0);
    }
}
