//! kNN classification and recall@k over embeddings with Euclidean distance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datagen::OUTLIER;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub recall_at: BTreeMap<usize, f64>,
    pub num_queries: usize,
    pub ks: Vec<usize>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn non_outliers(labels: &[i32]) -> Vec<usize> {
    (0..labels.len()).filter(|&i| labels[i] != OUTLIER).collect()
}

fn check_rows(emb: &Tensor, labels: &[i32], what: &str) -> Result<usize> {
    let [n, d] = emb.dims2()?;
    if n != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: {n} embeddings but {} labels",
            labels.len()
        )));
    }
    Ok(d)
}

/// `(distance², index)` of the `k` nearest candidates, ascending by distance
/// then index.
fn nearest(query: &[f64], emb: &Tensor, candidates: &[usize], skip: Option<usize>, k: usize) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = candidates
        .iter()
        .filter(|&&i| Some(i) != skip)
        .map(|&i| (sq_dist(query, emb.row(i)), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < all.len() {
        all.select_nth_unstable_by(k, cmp);
        all.truncate(k);
    }
    all.sort_by(cmp);
    all
}

/// Majority vote among the `k` nearest train embeddings. Ties go to the
/// class with the smaller summed distance, then the smaller class id.
/// Outliers are dropped from both sets.
pub fn knn_classify(
    train_emb: &Tensor,
    train_labels: &[i32],
    test_emb: &Tensor,
    test_labels: &[i32],
    k: usize,
) -> Result<f64> {
    let d_train = check_rows(train_emb, train_labels, "train")?;
    let d_test = check_rows(test_emb, test_labels, "test")?;
    if d_train != d_test {
        return Err(Error::ShapeMismatch(format!(
            "train dim {d_train} vs test dim {d_test}"
        )));
    }
    if k == 0 {
        return Err(Error::Validation("k must be ≥ 1".into()));
    }
    let train = non_outliers(train_labels);
    let test = non_outliers(test_labels);
    if train.is_empty() {
        return Err(Error::EmptySet("no labeled train embeddings".into()));
    }
    if test.is_empty() {
        return Err(Error::EmptySet("no labeled test embeddings".into()));
    }
    let correct = test
        .iter()
        .filter(|&&q| {
            let nn = nearest(test_emb.row(q), train_emb, &train, None, k);
            vote(&nn, train_labels) == test_labels[q]
        })
        .count();
    Ok(correct as f64 / test.len() as f64)
}

fn vote(neighbours: &[(f64, usize)], labels: &[i32]) -> i32 {
    // class → (count, summed distance)
    let mut tally: BTreeMap<i32, (usize, f64)> = BTreeMap::new();
    for &(d2, i) in neighbours {
        let e = tally.entry(labels[i]).or_default();
        e.0 += 1;
        e.1 += d2.sqrt();
    }
    let mut best: Option<(i32, usize, f64)> = None;
    // BTreeMap iterates in ascending class order, so strict comparisons keep
    // the smaller id on a full tie.
    for (&class, &(count, dist)) in &tally {
        let better = match best {
            None => true,
            Some((_, bc, bd)) => count > bc || (count == bc && dist < bd),
        };
        if better {
            best = Some((class, count, dist));
        }
    }
    best.map(|b| b.0).unwrap_or(OUTLIER)
}

/// Fraction of queries with at least one same-label item among their `k`
/// nearest gallery items, for each `k` in `ks`. With `exclude_self`, query
/// and gallery must be the same set and each query's own row is skipped.
pub fn recall_at_k(
    query_emb: &Tensor,
    query_labels: &[i32],
    gallery_emb: &Tensor,
    gallery_labels: &[i32],
    ks: &[usize],
    exclude_self: bool,
) -> Result<RetrievalResult> {
    let dq = check_rows(query_emb, query_labels, "query")?;
    let dg = check_rows(gallery_emb, gallery_labels, "gallery")?;
    if dq != dg {
        return Err(Error::ShapeMismatch(format!("query dim {dq} vs gallery dim {dg}")));
    }
    if exclude_self && query_labels.len() != gallery_labels.len() {
        return Err(Error::ShapeMismatch(
            "exclude_self needs the query set to be the gallery".into(),
        ));
    }
    let mut ks: Vec<usize> = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.first() == Some(&0) {
        return Err(Error::Validation("recall k must be ≥ 1".into()));
    }
    let queries = non_outliers(query_labels);
    let gallery = non_outliers(gallery_labels);
    if queries.is_empty() {
        return Err(Error::EmptySet("no labeled queries".into()));
    }
    if gallery.is_empty() {
        return Err(Error::EmptySet("empty gallery".into()));
    }
    let Some(&kmax) = ks.last() else {
        return Err(Error::Validation("no recall cutoffs given".into()));
    };
    let available = gallery.len() - usize::from(exclude_self);
    if kmax > available {
        return Err(Error::KTooLarge { k: kmax, gallery: available });
    }

    // first rank (0-based) at which a same-label item appears
    let first_hit: Vec<Option<usize>> = queries
        .iter()
        .map(|&q| {
            let skip = exclude_self.then_some(q);
            nearest(query_emb.row(q), gallery_emb, &gallery, skip, kmax)
                .iter()
                .position(|&(_, g)| gallery_labels[g] == query_labels[q])
        })
        .collect();
    let recall_at = ks
        .iter()
        .map(|&k| {
            let hits = first_hit.iter().filter(|h| matches!(h, Some(r) if *r < k)).count();
            (k, hits as f64 / queries.len() as f64)
        })
        .collect();
    Ok(RetrievalResult {
        recall_at,
        num_queries: queries.len(),
        ks,
    })
}
