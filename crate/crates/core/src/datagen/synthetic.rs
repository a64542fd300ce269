use serde::{Deserialize, Serialize};

use super::{Dataset, OUTLIER};
use crate::error::{Error, Result};
use crate::numcore::linalg::{add_diagonal, gram_outer, lower_matvec};
use crate::numcore::{cholesky_factor, gaussian_matrix, RngStream, Tensor};

/// Parameters of the Gaussian-cluster generator. Defaults give 10 classes of
/// 200 points in 128 dimensions plus 100 outliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    /// Class centers are `center_scale · g` with `g ~ N(0, I)`.
    pub center_scale: f64,
    /// Points are `μ_c + noise_scale · L_c z`.
    pub noise_scale: f64,
    /// Added to the diagonal of `A_c A_cᵀ` before factoring.
    pub jitter: f64,
    /// Probability that a point's label is redrawn uniformly over all classes.
    pub overlap_prob: f64,
    pub outlier_fraction: f64,
    pub outlier_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            samples_per_class: 200,
            dim: 128,
            center_scale: 5.0,
            noise_scale: 1.4,
            jitter: 1e-3,
            overlap_prob: 0.1,
            outlier_fraction: 0.05,
            outlier_sigma: 15.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn num_outliers(&self) -> usize {
        (self.num_classes as f64 * self.samples_per_class as f64 * self.outlier_fraction).floor()
            as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Validation(msg.to_string()));
        if self.num_classes < 1 || self.samples_per_class < 1 || self.dim < 1 {
            return bad("num_classes, samples_per_class and dim must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.overlap_prob) {
            return bad("overlap_prob must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return bad("outlier_fraction must be in [0, 1]");
        }
        let scales = [self.center_scale, self.noise_scale, self.jitter, self.outlier_sigma];
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("center_scale, noise_scale, jitter and outlier_sigma must be > 0");
        }
        Ok(())
    }
}

/// Draws the synthetic dataset. The random stream is consumed in a fixed
/// order: all class centers, then for each class its `A_c` matrix followed
/// by its points (noise vector, then the relabel coin and, when it fires,
/// the new class), then the outliers.
///
/// Cluster points come first in class order, so point `i` was generated by
/// class `i / samples_per_class`; outliers are appended at the end.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let (c, n, d) = (cfg.num_classes, cfg.samples_per_class, cfg.dim);
    let mut rng = RngStream::new(cfg.seed);

    let centers: Vec<Vec<f64>> = (0..c)
        .map(|_| {
            gaussian_matrix(&mut rng, 1, d)
                .into_data()
                .into_iter()
                .map(|g| cfg.center_scale * g)
                .collect()
        })
        .collect();

    let n_out = cfg.num_outliers();
    let mut features = Vec::with_capacity((c * n + n_out) * d);
    let mut labels = Vec::with_capacity(c * n + n_out);

    for (class, mu) in centers.iter().enumerate() {
        let a = gaussian_matrix(&mut rng, d, d);
        let sigma = add_diagonal(&gram_outer(&a)?, cfg.jitter)?;
        let l = cholesky_factor(&sigma)?;
        for _ in 0..n {
            let z: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let noise = lower_matvec(&l, &z);
            features.extend(mu.iter().zip(&noise).map(|(m, e)| m + cfg.noise_scale * e));
            let label = if rng.bernoulli(cfg.overlap_prob) {
                rng.below(c)
            } else {
                class
            };
            labels.push(label as i32);
        }
    }

    for _ in 0..n_out {
        features.extend((0..d).map(|_| cfg.outlier_sigma * rng.normal()));
        labels.push(OUTLIER);
    }

    let rows = labels.len();
    Dataset::new("synthetic", Tensor::matrix(rows, d, features)?, labels)
}
