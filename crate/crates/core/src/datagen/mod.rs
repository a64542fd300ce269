//! Datasets: the synthetic cluster generator and file ingestion (IDX, EMB1,
//! labeled CSV).

mod embfile;
mod idx;
mod synthetic;

use std::collections::BTreeSet;

pub use embfile::{load_embeddings, save_csv, save_embeddings};
pub use idx::{load_idx, read_idx_images, read_idx_labels};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use crate::error::{Error, Result};
use crate::numcore::{RngStream, Tensor};

/// Label reserved for outlier points.
pub const OUTLIER: i32 = -1;

/// Feature matrix plus integer labels. Labels are `0..C` for classes and
/// [`OUTLIER`] for noise points.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    features: Tensor,
    labels: Vec<i32>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Tensor, labels: Vec<i32>) -> Result<Self> {
        let [n, _] = features.dims2()?;
        if n != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{n} feature rows but {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l < OUTLIER) {
            return Err(Error::Validation(format!("label {bad} is not a class id or -1")));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.shape()[1]
    }

    /// Distinct non-outlier labels in ascending order.
    pub fn classes(&self) -> Vec<i32> {
        self.labels
            .iter()
            .copied()
            .filter(|&l| l != OUTLIER)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn num_outliers(&self) -> usize {
        self.labels.iter().filter(|&&l| l == OUTLIER).count()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// The first `n` samples (or all of them when `n` exceeds the size).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Seeded random split into `(train, test)`; the test part receives
    /// `floor(len · test_fraction)` samples.
    pub fn split(&self, test_fraction: f64, rng: &mut RngStream) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::Validation(format!(
                "test_fraction {test_fraction} must be in [0, 1)"
            )));
        }
        let perm = rng.permutation(self.len());
        let n_test = (self.len() as f64 * test_fraction).floor() as usize;
        let (test, train) = perm.split_at(n_test);
        let (mut test, mut train) = (test.to_vec(), train.to_vec());
        test.sort_unstable();
        train.sort_unstable();
        Ok((self.subset(&train), self.subset(&test)))
    }

    /// Features reshaped as `N × channels × height × width` images.
    pub fn features_as_images(&self, channels: usize, height: usize, width: usize) -> Result<Tensor> {
        self.features
            .clone()
            .reshape(&[self.len(), channels, height, width])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let f = Tensor::matrix(4, 2, vec![0., 0., 1., 1., 2., 2., 3., 3.]).unwrap();
        Dataset::new("tiny", f, vec![0, 1, -1, 1]).unwrap()
    }

    #[test]
    fn classes_skip_outliers() {
        let d = tiny();
        assert_eq!(d.classes(), vec![0, 1]);
        assert_eq!(d.num_outliers(), 1);
    }

    #[test]
    fn label_count_must_match() {
        let f = Tensor::zeros(&[3, 2]);
        assert!(Dataset::new("x", f, vec![0, 1]).is_err());
    }

    #[test]
    fn split_partitions_samples() {
        let d = tiny();
        let (train, test) = d.split(0.5, &mut RngStream::new(1)).unwrap();
        assert_eq!(train.len() + test.len(), 4);
        assert_eq!(test.len(), 2);
        let mut all: Vec<f64> = train
            .features()
            .data()
            .iter()
            .chain(test.features().data())
            .step_by(2)
            .copied()
            .collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, vec![0., 1., 2., 3.]);
    }
}
