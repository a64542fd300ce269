use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::SyntheticConfig;
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::model::Architecture;
use crate::trainer::TrainConfig;

/// One experiment: data source, encoder, training, analysis and evaluation
/// options. Every field has a default, so an empty document describes the
/// default synthetic comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Drives data generation, splitting and training.
    pub seed: u64,
    /// Not echoed into reports, so runs written to different directories
    /// still produce identical documents.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    pub losses: Vec<LossKind>,
    pub dataset: DatasetConfig,
    /// Defaults depend on the source: MLP for synthetic data, CNN for IDX
    /// images, a single head for embedding files.
    pub model: Option<Architecture>,
    pub train: TrainSection,
    pub analysis: AnalysisSection,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs/experiment"),
            losses: vec![LossKind::Contrastive, LossKind::Triplet],
            dataset: DatasetConfig::default(),
            model: None,
            train: TrainSection::default(),
            analysis: AnalysisSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synthetic,
    Idx,
    Embeddings,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    /// Used when `source = "synthetic"`; its `seed` is replaced by the
    /// experiment seed.
    pub synthetic: SyntheticConfig,
    pub idx: Option<IdxSource>,
    pub embeddings: Option<EmbeddingSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSource {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    /// Without a test pair the training files are split by `eval.test_fraction`.
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Keep only the first `n` samples.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSource {
    pub path: PathBuf,
    pub test_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub margin: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::new(LossKind::Contrastive);
        Self {
            margin: t.margin,
            lr: t.lr,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub pca_k: usize,
    pub t_test: bool,
    pub greediness_window: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            pca_k: 2,
            t_test: true,
            greediness_window: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GalleryMode {
    /// Test queries against the test set itself, leaving each query out.
    #[default]
    Test,
    /// Test queries against the training set.
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub knn_k: usize,
    pub recall_ks: Vec<usize>,
    /// Held-out share for sources without their own test set.
    pub test_fraction: f64,
    pub gallery: GalleryMode,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            knn_k: 5,
            recall_ks: vec![1, 5, 10],
            test_fraction: 0.2,
            gallery: GalleryMode::Test,
        }
    }
}

impl ExperimentConfig {
    /// Parses a TOML document without checking referenced files.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let before = &text[..span.start.min(text.len())];
                    let line = before.matches('\n').count() + 1;
                    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                    format!("line {line}, column {col}")
                }
                None => "document".to_string(),
            };
            Error::Parse {
                location,
                message: e.message().to_string(),
            }
        })
    }

    pub fn train_config(&self, loss: LossKind) -> TrainConfig {
        TrainConfig {
            loss,
            margin: self.train.margin,
            lr: self.train.lr,
            weight_decay: self.train.weight_decay,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            seed: crate::numcore::rng::derive_seed(self.seed, super::TRAIN_SEED_TAG),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.losses.is_empty() {
            return fail("losses must name at least one loss".into());
        }
        let mut seen = self.losses.clone();
        seen.sort_by_key(|l| l.name());
        seen.dedup();
        if seen.len() != self.losses.len() {
            return fail("losses must not repeat".into());
        }
        self.train_config(LossKind::Contrastive).validate()?;
        if let Some(arch) = &self.model {
            arch.validate()?;
        }
        match self.dataset.source {
            DataSource::Synthetic => self.dataset.synthetic.validate()?,
            DataSource::Idx => {
                let Some(idx) = &self.dataset.idx else {
                    return fail("source \"idx\" needs a [dataset.idx] table".into());
                };
                require_file(&idx.train_images)?;
                require_file(&idx.train_labels)?;
                match (&idx.test_images, &idx.test_labels) {
                    (Some(i), Some(l)) => {
                        require_file(i)?;
                        require_file(l)?;
                    }
                    (None, None) => {}
                    _ => return fail("test_images and test_labels must be given together".into()),
                }
                if idx.train_limit == Some(0) || idx.test_limit == Some(0) {
                    return fail("sample limits must be positive".into());
                }
            }
            DataSource::Embeddings => {
                let Some(emb) = &self.dataset.embeddings else {
                    return fail("source \"embeddings\" needs a [dataset.embeddings] table".into());
                };
                require_file(&emb.path)?;
                if let Some(p) = &emb.test_path {
                    require_file(p)?;
                }
            }
        }
        if self.analysis.pca_k == 0 {
            return fail("analysis.pca_k must be ≥ 1".into());
        }
        if self.analysis.greediness_window == 0 {
            return fail("analysis.greediness_window must be ≥ 1".into());
        }
        if self.eval.knn_k == 0 {
            return fail("eval.knn_k must be ≥ 1".into());
        }
        if self.eval.recall_ks.is_empty() || self.eval.recall_ks.contains(&0) {
            return fail("eval.recall_ks must be a non-empty list of positive integers".into());
        }
        if !(self.eval.test_fraction > 0.0 && self.eval.test_fraction < 1.0) {
            return fail(format!(
                "eval.test_fraction {} must lie in (0, 1)",
                self.eval.test_fraction
            ));
        }
        Ok(())
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{} does not exist", path.display())))
    }
}

/// Reads, parses and cross-checks a config file.
pub fn validate_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let cfg = ExperimentConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })?;
    cfg.validate()?;
    Ok(cfg)
}
