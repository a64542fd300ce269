//! End-to-end experiment driver: load or generate data, train each loss,
//! analyze the embedding space, evaluate downstream tasks and write the
//! report with its artifacts.
//!
//! Output directory layout:
//!
//! ```text
//! report.json            RunReport
//! trace_<loss>.csv       per-epoch diagnostics
//! pca_<loss>.csv         label,pc1,pc2 for the held-out split
//! pca_<loss>.svg         scatter of the same
//! checkpoint_<loss>.bin  trained encoder
//! ```

mod config;
mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{
    validate_config, AnalysisSection, DataSource, DatasetConfig, EmbeddingSource, EvalSection,
    ExperimentConfig, GalleryMode, IdxSource, TrainSection,
};
pub use svg::scatter_svg;

use crate::analysis::{
    greediness_report, paired_t_test, pca_csv, pca_project, variance_report, GreedinessReport,
    TTest, VarianceReport,
};
use crate::datagen::{generate_synthetic, load_embeddings, load_idx, Dataset};
use crate::error::{Error, Result};
use crate::eval::{knn_classify, recall_at_k, RetrievalResult};
use crate::losses::LossKind;
use crate::model::{load_checkpoint, save_checkpoint, Architecture, ModelParams};
use crate::numcore::RngStream;
use crate::trainer::{embed_dataset, train_observed, DiagnosticsTrace};

pub(crate) const SPLIT_SEED_TAG: u64 = 11;
pub(crate) const TRAIN_SEED_TAG: u64 = 12;

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub dim: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub num_classes: usize,
    pub train_outliers: usize,
    pub test_outliers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub trace: String,
    pub checkpoint: String,
    pub pca_csv: String,
    pub pca_svg: String,
}

impl Artifacts {
    fn for_loss(loss: LossKind) -> Self {
        Self {
            trace: format!("trace_{loss}.csv"),
            checkpoint: format!("checkpoint_{loss}.bin"),
            pca_csv: format!("pca_{loss}.csv"),
            pca_svg: format!("pca_{loss}.svg"),
        }
    }

    pub fn files(&self) -> [&str; 4] {
        [&self.trace, &self.checkpoint, &self.pca_csv, &self.pca_svg]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub variance: VarianceReport,
    pub greediness: GreedinessReport,
    pub pca_explained: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub knn_k: usize,
    pub knn_accuracy: f64,
    pub retrieval: RetrievalResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRun {
    pub loss: LossKind,
    pub final_loss: f64,
    pub analysis: Analysis,
    pub evaluation: Evaluation,
    pub artifacts: Artifacts,
}

/// One row of the intra/inter variance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub loss: LossKind,
    pub intra_mean: f64,
    pub intra_var: f64,
    pub inter_mean: f64,
    pub inter_var: f64,
    pub inter_mean_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// intra_mean(triplet) / intra_mean(contrastive)
    pub intra_ratio: f64,
    /// inter_mean_dist(triplet) − inter_mean_dist(contrastive)
    pub inter_dist_gap: f64,
    /// Paired over classes, triplet minus contrastive per-class intra variance.
    pub t_test: Option<TTest>,
    pub t_test_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub architecture: Architecture,
    pub dataset: DatasetSummary,
    pub runs: Vec<LossRun>,
    pub variance_table: Vec<VarianceRow>,
    pub comparison: Option<Comparison>,
}

impl RunReport {
    pub fn run(&self, loss: LossKind) -> Option<&LossRun> {
        self.runs.iter().find(|r| r.loss == loss)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Validation(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name.to_string(),
        source: Box::new(e),
    })
}

/// Loads or generates the dataset and produces the train/test split.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Splits> {
    let mut split_rng = RngStream::derived(cfg.seed, SPLIT_SEED_TAG);
    let frac = cfg.eval.test_fraction;
    match cfg.dataset.source {
        DataSource::Synthetic => {
            let syn = crate::datagen::SyntheticConfig {
                seed: cfg.seed,
                ..cfg.dataset.synthetic.clone()
            };
            let (train, test) = generate_synthetic(&syn)?.split(frac, &mut split_rng)?;
            Ok(Splits { train, test })
        }
        DataSource::Idx => {
            let idx = cfg
                .dataset
                .idx
                .as_ref()
                .ok_or_else(|| Error::Validation("missing [dataset.idx]".into()))?;
            let limit = |d: Dataset, n: Option<usize>| match n {
                Some(n) => d.head(n),
                None => d,
            };
            let full = load_idx(&idx.train_images, &idx.train_labels)?;
            match (&idx.test_images, &idx.test_labels) {
                (Some(ti), Some(tl)) => Ok(Splits {
                    train: limit(full, idx.train_limit),
                    test: limit(load_idx(ti, tl)?, idx.test_limit),
                }),
                _ => {
                    let (train, test) = full.split(frac, &mut split_rng)?;
                    Ok(Splits {
                        train: limit(train, idx.train_limit),
                        test: limit(test, idx.test_limit),
                    })
                }
            }
        }
        DataSource::Embeddings => {
            let src = cfg
                .dataset
                .embeddings
                .as_ref()
                .ok_or_else(|| Error::Validation("missing [dataset.embeddings]".into()))?;
            let full = load_embeddings(&src.path)?;
            match &src.test_path {
                Some(p) => Ok(Splits {
                    train: full,
                    test: load_embeddings(p)?,
                }),
                None => {
                    let (train, test) = full.split(frac, &mut split_rng)?;
                    Ok(Splits { train, test })
                }
            }
        }
    }
}

/// The configured encoder, or the default for the data source.
pub fn resolve_architecture(cfg: &ExperimentConfig, input_dim: usize) -> Architecture {
    if let Some(arch) = &cfg.model {
        return arch.clone();
    }
    match cfg.dataset.source {
        DataSource::Synthetic => match Architecture::default_mlp() {
            Architecture::Mlp { mut dims } => {
                dims[0] = input_dim;
                Architecture::Mlp { dims }
            }
            other => other,
        },
        DataSource::Idx => Architecture::default_cnn(),
        DataSource::Embeddings => Architecture::default_head(input_dim),
    }
}

pub fn summarize(splits: &Splits) -> DatasetSummary {
    let mut classes = splits.train.classes();
    classes.extend(splits.test.classes());
    classes.sort_unstable();
    classes.dedup();
    DatasetSummary {
        name: splits.train.name.clone(),
        dim: splits.train.dim(),
        train_size: splits.train.len(),
        test_size: splits.test.len(),
        num_classes: classes.len(),
        train_outliers: splits.train.num_outliers(),
        test_outliers: splits.test.num_outliers(),
    }
}

/// Trains one loss and writes its trace and checkpoint into `out`.
pub fn train_stage(
    cfg: &ExperimentConfig,
    splits: &Splits,
    arch: &Architecture,
    loss: LossKind,
    out: &Path,
    log: &mut dyn FnMut(&str),
) -> Result<(ModelParams, DiagnosticsTrace)> {
    let tcfg = cfg.train_config(loss);
    let (params, trace) = train_observed(&splits.train, arch, &tcfg, |r| {
        log(&format!(
            "[{loss}] epoch {:>3}  loss {:.5}  active {:.3}  grad {:.4}",
            r.epoch, r.mean_loss, r.active_ratio, r.grad_norm
        ))
    })?;
    let files = Artifacts::for_loss(loss);
    trace.write_csv(out.join(&files.trace))?;
    save_checkpoint(out.join(&files.checkpoint), arch, &params)?;
    Ok((params, trace))
}

/// Reads back what [`train_stage`] wrote.
pub fn load_trained(out: &Path, loss: LossKind) -> Result<(Architecture, ModelParams, DiagnosticsTrace)> {
    let files = Artifacts::for_loss(loss);
    let (arch, params) = load_checkpoint(out.join(&files.checkpoint))?;
    let trace = DiagnosticsTrace::from_csv(&fs::read_to_string(out.join(&files.trace))?)?;
    Ok((arch, params, trace))
}

/// Variance structure, greediness and PCA on the held-out split; writes the
/// PCA CSV and SVG.
pub fn analyze_stage(
    cfg: &ExperimentConfig,
    test_emb: &crate::numcore::Tensor,
    test: &Dataset,
    trace: &DiagnosticsTrace,
    loss: LossKind,
    out: &Path,
) -> Result<Analysis> {
    let variance = variance_report(test_emb, test.labels())?;
    let greediness = greediness_report(trace, cfg.analysis.greediness_window);
    let k = cfg.analysis.pca_k.min(test_emb.rows()).min(test_emb.row_len());
    let pca = pca_project(test_emb, k.max(1))?;
    let files = Artifacts::for_loss(loss);
    fs::write(out.join(&files.pca_csv), pca_csv(&pca, test.labels())?)?;
    let points: Vec<(f64, f64)> = (0..pca.projected.rows())
        .map(|r| {
            let row = pca.projected.row(r);
            (row[0], row.get(1).copied().unwrap_or(0.0))
        })
        .collect();
    let title = format!("{} / {loss}: PCA of held-out embeddings", test.name);
    fs::write(out.join(&files.pca_svg), scatter_svg(&title, &points, test.labels()))?;
    Ok(Analysis {
        variance,
        greediness,
        pca_explained: pca.explained_fraction,
    })
}

pub fn evaluate_stage(
    cfg: &ExperimentConfig,
    train_emb: &crate::numcore::Tensor,
    test_emb: &crate::numcore::Tensor,
    splits: &Splits,
) -> Result<Evaluation> {
    let knn_accuracy = knn_classify(
        train_emb,
        splits.train.labels(),
        test_emb,
        splits.test.labels(),
        cfg.eval.knn_k,
    )?;
    let retrieval = match cfg.eval.gallery {
        GalleryMode::Test => recall_at_k(
            test_emb,
            splits.test.labels(),
            test_emb,
            splits.test.labels(),
            &cfg.eval.recall_ks,
            true,
        )?,
        GalleryMode::Train => recall_at_k(
            test_emb,
            splits.test.labels(),
            train_emb,
            splits.train.labels(),
            &cfg.eval.recall_ks,
            false,
        )?,
    };
    Ok(Evaluation {
        knn_k: cfg.eval.knn_k,
        knn_accuracy,
        retrieval,
    })
}

/// Contrastive vs triplet summary when both losses ran.
pub fn compare(cfg: &ExperimentConfig, runs: &[LossRun]) -> Option<Comparison> {
    let get = |l| runs.iter().find(|r| r.loss == l).map(|r| &r.analysis.variance);
    let (c, t) = (get(LossKind::Contrastive)?, get(LossKind::Triplet)?);
    let (t_test, t_test_error) = if cfg.analysis.t_test {
        match paired_t_test(&t.intra_values(), &c.intra_values()) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    Some(Comparison {
        intra_ratio: t.intra_mean / c.intra_mean,
        inter_dist_gap: t.inter_mean_dist - c.inter_mean_dist,
        t_test,
        t_test_error,
    })
}

pub fn variance_table(runs: &[LossRun]) -> Vec<VarianceRow> {
    runs.iter()
        .map(|r| {
            let v = &r.analysis.variance;
            VarianceRow {
                loss: r.loss,
                intra_mean: v.intra_mean,
                intra_var: v.intra_var,
                inter_mean: v.inter_mean_dist,
                inter_var: v.inter_var,
                inter_mean_sq: v.inter_mean_sq,
            }
        })
        .collect()
}

/// Runs the whole pipeline for every configured loss and writes
/// `report.json` plus the per-loss artifacts into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    run_experiment_logged(cfg, &mut |_| {})
}

pub fn run_experiment_logged(cfg: &ExperimentConfig, log: &mut dyn FnMut(&str)) -> Result<RunReport> {
    stage("config", cfg.validate())?;
    let out: PathBuf = cfg.out_dir.clone();
    stage("output", fs::create_dir_all(&out).map_err(Error::from))?;
    let splits = stage("data", load_data(cfg))?;
    let arch = resolve_architecture(cfg, splits.train.dim());
    stage("model", arch.validate())?;
    log(&format!(
        "data: {} train / {} test samples, {} features",
        splits.train.len(),
        splits.test.len(),
        splits.train.dim()
    ));

    let mut runs = Vec::with_capacity(cfg.losses.len());
    for &loss in &cfg.losses {
        let (params, trace) = stage("train", train_stage(cfg, &splits, &arch, loss, &out, log))?;
        let (train_emb, test_emb) = stage(
            "embed",
            embed_dataset(&params, &arch, &splits.train)
                .and_then(|tr| Ok((tr, embed_dataset(&params, &arch, &splits.test)?))),
        )?;
        let analysis = stage("analyze", analyze_stage(cfg, &test_emb, &splits.test, &trace, loss, &out))?;
        let evaluation = stage("eval", evaluate_stage(cfg, &train_emb, &test_emb, &splits))?;
        runs.push(LossRun {
            loss,
            final_loss: trace.records.last().map_or(f64::NAN, |r| r.mean_loss),
            analysis,
            evaluation,
            artifacts: Artifacts::for_loss(loss),
        });
    }

    let report = RunReport {
        seed: cfg.seed,
        config: cfg.clone(),
        architecture: arch,
        dataset: summarize(&splits),
        variance_table: variance_table(&runs),
        comparison: compare(cfg, &runs),
        runs,
    };
    stage("report", fs::write(out.join("report.json"), report.to_json()?).map_err(Error::from))?;
    Ok(report)
}

/// Plain-text tables mirroring the variance, greediness, classification and
/// retrieval comparisons.
pub fn render_report(report: &RunReport) -> String {
    let mut s = String::new();
    let d = &report.dataset;
    let _ = writeln!(
        s,
        "dataset {}: {} train / {} test, {} features, {} classes (seed {})\n",
        d.name, d.train_size, d.test_size, d.dim, d.num_classes, report.seed
    );
    let _ = writeln!(s, "Variance structure (held-out embeddings)");
    let _ = writeln!(
        s,
        "{:<12} {:>10} {:>10} {:>10} {:>10} {:>12}",
        "loss", "intra μ", "intra σ²", "inter μ", "inter σ²", "inter μ (sq)"
    );
    for r in &report.variance_table {
        let _ = writeln!(
            s,
            "{:<12} {:>10.4} {:>10.6} {:>10.4} {:>10.6} {:>12.4}",
            r.loss.name(),
            r.intra_mean,
            r.intra_var,
            r.inter_mean,
            r.inter_var,
            r.inter_mean_sq
        );
    }
    if let Some(c) = &report.comparison {
        let _ = writeln!(s, "intra ratio triplet/contrastive: {:.3}", c.intra_ratio);
        match (&c.t_test, &c.t_test_error) {
            (Some(t), _) => {
                let _ = writeln!(s, "paired t-test over classes: t = {:.3}, df = {}, p = {:.3e}", t.t, t.df, t.p);
            }
            (None, Some(e)) => {
                let _ = writeln!(s, "paired t-test unavailable: {e}");
            }
            _ => {}
        }
    }
    let _ = writeln!(s, "\nGreediness");
    let _ = writeln!(s, "{:<12} {:>12} {:>10} {:>12}", "loss", "active ratio", "grad norm", "decay epoch");
    for r in &report.runs {
        let g = &r.analysis.greediness;
        let decay = g.decay_epoch.map_or("never".to_string(), |e| e.to_string());
        let _ = writeln!(
            s,
            "{:<12} {:>11.1}% {:>10.4} {:>12}",
            r.loss.name(),
            100.0 * g.mean_active_ratio,
            g.mean_grad_norm,
            decay
        );
    }
    let _ = writeln!(s, "\nDownstream");
    let ks = report.runs.first().map(|r| r.evaluation.retrieval.ks.clone()).unwrap_or_default();
    let mut header = format!("{:<12} {:>10}", "loss", "kNN acc");
    for k in &ks {
        header.push_str(&format!(" {:>10}", format!("R@{k}")));
    }
    let _ = writeln!(s, "{header}");
    for r in &report.runs {
        let mut line = format!("{:<12} {:>10.4}", r.loss.name(), r.evaluation.knn_accuracy);
        for k in &ks {
            let v = r.evaluation.retrieval.recall_at.get(k).copied().unwrap_or(f64::NAN);
            line.push_str(&format!(" {v:>10.4}"));
        }
        let _ = writeln!(s, "{line}");
    }
    s
}
