//! Mini-batch training with per-epoch greediness diagnostics.
//!
//! Random streams are derived from `TrainConfig::seed`: tag 1 initializes
//! parameters, tag 2 shuffles batches, tag 3 samples pairs/triplets.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::losses::{
    batch_is_feasible,
    contrastive_loss, sample_pairs, sample_triplets, triplet_loss,
    LossKind, LossOutput,
};
use crate::model::{encode, encode_backward, init_params, Architecture, ModelParams};
use crate::numcore::{AdamState, RngStream, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub margin: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Adam at lr 1e-3 with weight decay 1e-5, batch 64, 50 epochs, margin 1.
    pub fn new(loss: LossKind) -> Self {
        Self {
            loss,
            margin: 1.0,
            lr: 1e-3,
            weight_decay: 1e-5,
            batch_size: 64,
            epochs: 50,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Validation("epochs must be ≥ 1".into()));
        }
        if self.batch_size < 4 {
            return Err(Error::Validation("batch_size must be ≥ 4".into()));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Validation("margin must be > 0".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Validation("lr must be ≥ 0".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Validation("weight_decay must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Batch-averaged diagnostics for one epoch (epochs are 1-indexed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub active_ratio: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsTrace {
    pub records: Vec<EpochRecord>,
}

impl DiagnosticsTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mean_loss).collect()
    }

    /// Builds a trace from per-epoch values; used for reports and tests.
    pub fn from_series(losses: &[f64], active: &[f64], grad_norms: &[f64]) -> Self {
        let records = losses
            .iter()
            .zip(active)
            .zip(grad_norms)
            .enumerate()
            .map(|(i, ((&l, &a), &g))| EpochRecord {
                epoch: i + 1,
                mean_loss: l,
                active_ratio: a,
                grad_norm: g,
            })
            .collect();
        Self { records }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss,active_ratio,grad_norm\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{},{},{}", r.epoch, r.mean_loss, r.active_ratio, r.grad_norm);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses the output of [`DiagnosticsTrace::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "epoch,mean_loss,active_ratio,grad_norm")) => {}
            _ => {
                return Err(Error::Parse {
                    location: "line 1".into(),
                    message: "expected trace header".into(),
                })
            }
        }
        let mut records = Vec::new();
        for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |message: String| Error::Parse {
                location: format!("line {}", i + 1),
                message,
            };
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 4 {
                return Err(bad(format!("expected 4 fields, found {}", cells.len())));
            }
            let epoch = cells[0].parse().map_err(|e| bad(format!("epoch: {e}")))?;
            let num = |k: usize| cells[k].parse::<f64>().map_err(|e| bad(format!("field {k}: {e}")));
            records.push(EpochRecord {
                epoch,
                mean_loss: num(1)?,
                active_ratio: num(2)?,
                grad_norm: num(3)?,
            });
        }
        Ok(Self { records })
    }
}

/// `(active_ratio, grad_norm)` for one batch. The norm is taken over all
/// parameter gradients concatenated, before any optimizer transform.
pub fn batch_diagnostics(loss: &LossOutput, param_grads: &[Tensor]) -> (f64, f64) {
    let sq: f64 = param_grads
        .iter()
        .flat_map(|t| t.data())
        .map(|v| v * v)
        .sum();
    (loss.active_ratio(), sq.sqrt())
}

pub fn train(
    dataset: &Dataset,
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<(ModelParams, DiagnosticsTrace)> {
    train_observed(dataset, arch, cfg, |_| {})
}

/// [`train`], calling `observer` after every epoch.
pub fn train_observed(
    dataset: &Dataset,
    arch: &Architecture,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<(ModelParams, DiagnosticsTrace)> {
    cfg.validate()?;
    arch.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptySet("training set".into()));
    }
    if dataset.classes().len() < 2 {
        return Err(Error::TooFewClasses(dataset.classes().len()));
    }
    if arch.input_dim() != dataset.dim() {
        return Err(Error::ShapeMismatch(format!(
            "architecture expects {} features, dataset has {}",
            arch.input_dim(),
            dataset.dim()
        )));
    }

    let mut params = init_params(arch, &mut RngStream::derived(cfg.seed, 1))?;
    let mut shuffle_rng = RngStream::derived(cfg.seed, 2);
    let mut sample_rng = RngStream::derived(cfg.seed, 3);
    let mut adam = AdamState::new(&params.tensors, cfg.lr, cfg.weight_decay);
    let labels = dataset.labels();
    let mut trace = DiagnosticsTrace::default();

    for epoch in 1..=cfg.epochs {
        let batches = epoch_batches(labels, cfg.batch_size, &mut shuffle_rng)?;
        let (mut loss_sum, mut active_sum, mut norm_sum) = (0.0, 0.0, 0.0);
        for (b, batch) in batches.iter().enumerate() {
            let x = dataset.features().select_rows(batch);
            let (emb, cache) = encode(&params, arch, &x)?;
            let out = match cfg.loss {
                LossKind::Contrastive => {
                    let pairs = sample_pairs(labels, batch, cfg.margin, &mut sample_rng)?;
                    contrastive_loss(&emb, &pairs)?
                }
                LossKind::Triplet => {
                    let triplets = sample_triplets(labels, batch, cfg.margin, &mut sample_rng)?;
                    triplet_loss(&emb, &triplets)?
                }
            };
            if !out.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    trace: Box::new(trace),
                });
            }
            let grads = encode_backward(&params, &cache, &out.grad_embeddings)?;
            let (active, norm) = batch_diagnostics(&out, &grads);
            adam.step(&mut params.tensors, &grads)?;
            loss_sum += out.total;
            active_sum += active;
            norm_sum += norm;
        }
        let nb = batches.len() as f64;
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / nb,
            active_ratio: active_sum / nb,
            grad_norm: norm_sum / nb,
        };
        observer(&record);
        trace.records.push(record);
    }
    Ok((params, trace))
}

/// Shuffled batch assignment for one epoch. If any batch cannot yield a
/// positive and a negative, the assignment is redrawn once; a second
/// failure is an error.
fn epoch_batches(labels: &[i32], batch_size: usize, rng: &mut RngStream) -> Result<Vec<Vec<usize>>> {
    for _ in 0..2 {
        let perm = rng.permutation(labels.len());
        let batches: Vec<Vec<usize>> = perm.chunks(batch_size).map(<[usize]>::to_vec).collect();
        if batches.iter().all(|b| batch_is_feasible(labels, b)) {
            return Ok(batches);
        }
    }
    Err(Error::InfeasibleBatch(
        "shuffled batches lack positive or negative pairs after one resample".into(),
    ))
}

/// Embeds a whole dataset in chunks, without keeping backward caches.
pub fn embed_dataset(params: &ModelParams, arch: &Architecture, dataset: &Dataset) -> Result<Tensor> {
    const CHUNK: usize = 256;
    let n = dataset.len();
    let mut data = Vec::with_capacity(n * arch.output_dim());
    for start in (0..n).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
        let (emb, _) = encode(params, arch, &dataset.features().select_rows(&idx))?;
        data.extend_from_slice(emb.data());
    }
    Tensor::matrix(n, arch.output_dim(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_synthetic, SyntheticConfig};

    fn small_data() -> Dataset {
        generate_synthetic(&SyntheticConfig {
            num_classes: 4,
            samples_per_class: 30,
            dim: 12,
            seed: 2,
            ..SyntheticConfig::default()
        })
        .unwrap()
    }

    fn small_arch() -> Architecture {
        Architecture::Mlp {
            dims: vec![12, 8, 4],
        }
    }

    #[test]
    fn diagnostics_zero_case() {
        let out = LossOutput {
            total: 0.0,
            per_item: vec![0.0; 3],
            active_mask: vec![false; 3],
            grad_embeddings: Tensor::zeros(&[3, 2]),
        };
        assert_eq!(batch_diagnostics(&out, &[Tensor::zeros(&[4])]), (0.0, 0.0));
    }

    #[test]
    fn diagnostics_definitions() {
        let per_item = vec![0.5, 0.0, 0.1, 0.0];
        let out = LossOutput {
            total: 0.15,
            active_mask: per_item.iter().map(|&l| l > 0.0).collect(),
            per_item,
            grad_embeddings: Tensor::zeros(&[4, 2]),
        };
        let grads = [Tensor::scalar(3.0), Tensor::scalar(4.0)];
        assert_eq!(batch_diagnostics(&out, &grads), (0.5, 5.0));
    }

    #[test]
    fn trace_csv_round_trip() {
        let t = DiagnosticsTrace::from_series(&[0.4, 0.1 / 3.0], &[0.9, 0.25], &[1e-7, 2.5]);
        assert_eq!(DiagnosticsTrace::from_csv(&t.to_csv()).unwrap(), t);
        assert!(DiagnosticsTrace::from_csv("epoch,loss\n").is_err());
    }

    #[test]
    fn one_epoch_smoke() {
        let ds = generate_synthetic(&SyntheticConfig {
            num_classes: 4,
            samples_per_class: 32,
            dim: 128,
            outlier_fraction: 0.0,
            seed: 1,
            ..SyntheticConfig::default()
        })
        .unwrap();
        assert_eq!(ds.len(), 128);
        for loss in [LossKind::Contrastive, LossKind::Triplet] {
            let cfg = TrainConfig {
                epochs: 1,
                ..TrainConfig::new(loss)
            };
            let (_, trace) = train(&ds, &Architecture::default_mlp(), &cfg).unwrap();
            assert_eq!(trace.len(), 1);
            assert!(trace.records[0].mean_loss.is_finite());
        }
    }

    #[test]
    fn zero_lr_freezes_parameters() {
        let ds = small_data();
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 3,
            batch_size: 16,
            ..TrainConfig::new(LossKind::Triplet)
        };
        let (params, trace) = train(&ds, &small_arch(), &cfg).unwrap();
        let init = init_params(&small_arch(), &mut RngStream::derived(cfg.seed, 1)).unwrap();
        assert_eq!(params, init);
        let losses = trace.losses();
        let mean = losses.iter().sum::<f64>() / 3.0;
        assert!(losses.iter().all(|l| (l - mean).abs() < 0.25 * mean));
    }

    #[test]
    fn invalid_config_rejected() {
        let ds = small_data();
        for cfg in [
            TrainConfig {
                margin: -1.0,
                ..TrainConfig::new(LossKind::Contrastive)
            },
            TrainConfig {
                epochs: 0,
                ..TrainConfig::new(LossKind::Contrastive)
            },
            TrainConfig {
                batch_size: 2,
                ..TrainConfig::new(LossKind::Contrastive)
            },
        ] {
            assert!(matches!(
                train(&ds, &small_arch(), &cfg),
                Err(Error::Validation(_))
            ));
        }
    }

    #[test]
    fn single_class_rejected() {
        let f = Tensor::zeros(&[6, 12]);
        let ds = Dataset::new("one", f, vec![0, 0, 0, -1, -1, 0]).unwrap();
        assert!(matches!(
            train(&ds, &small_arch(), &TrainConfig::new(LossKind::Triplet)),
            Err(Error::TooFewClasses(1))
        ));
    }

    #[test]
    fn unlucky_batches_abort_after_resample() {
        // A trailing batch of one sample can never hold a pair.
        let mut rng = RngStream::new(0);
        let labels = vec![0, 0, 1, 1, 0];
        assert!(matches!(
            epoch_batches(&labels, 4, &mut rng),
            Err(Error::InfeasibleBatch(_))
        ));
    }

    #[test]
    fn trace_csv_layout() {
        let t = DiagnosticsTrace::from_series(&[1.0, 0.5], &[0.75, 0.5], &[0.25, 0.125]);
        assert_eq!(
            t.to_csv(),
            "epoch,mean_loss,active_ratio,grad_norm\n1,1,0.75,0.25\n2,0.5,0.5,0.125\n"
        );
    }
}
