use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use metric_lab::analysis::paired_t_test;
use metric_lab::datagen::{generate_synthetic, save_csv, save_embeddings, SyntheticConfig};
use metric_lab::experiment::{
    self, analyze_stage, evaluate_stage, load_data, load_trained, render_report,
    resolve_architecture, run_experiment_logged, train_stage, validate_config, ExperimentConfig,
    RunReport,
};
use metric_lab::losses::LossKind;
use metric_lab::trainer::embed_dataset;

#[derive(Parser)]
#[command(name = "metric-lab", version, about = "Contrastive vs triplet metric learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset (data.emb and data.csv)
    Generate(Common),
    /// Train the selected losses; writes traces and checkpoints
    Train(Common),
    /// Variance, greediness and PCA from trained checkpoints (analysis.json)
    Analyze(Common),
    /// kNN accuracy and recall@k from trained checkpoints (eval.json)
    Eval(Common),
    /// Full pipeline for both losses (report.json and artifacts)
    CompareLosses(Common),
    /// Print the tables of an existing report.json
    Report(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Contrastive,
    Triplet,
    Both,
}

impl Common {
    fn config(&self, default_losses: Option<LossArg>) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => validate_config(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        match self.loss.or(default_losses) {
            Some(LossArg::Contrastive) => cfg.losses = vec![LossKind::Contrastive],
            Some(LossArg::Triplet) => cfg.losses = vec![LossKind::Triplet],
            Some(LossArg::Both) => cfg.losses = vec![LossKind::Contrastive, LossKind::Triplet],
            None => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn log(&self) -> impl FnMut(&str) {
        let quiet = self.quiet;
        move |line: &str| {
            if !quiet {
                eprintln!("{line}");
            }
        }
    }
}

fn write_json<T: serde::Serialize>(path: PathBuf, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = c.config(None)?;
            fs::create_dir_all(&cfg.out_dir)?;
            let syn = SyntheticConfig {
                seed: cfg.seed,
                ..cfg.dataset.synthetic.clone()
            };
            let data = generate_synthetic(&syn).context("generate stage failed")?;
            save_embeddings(&data, cfg.out_dir.join("data.emb"))?;
            save_csv(&data, cfg.out_dir.join("data.csv"))?;
            c.log()(&format!(
                "wrote {} samples ({} outliers) to {}",
                data.len(),
                data.num_outliers(),
                cfg.out_dir.display()
            ));
        }
        Command::Train(c) => {
            let cfg = c.config(None)?;
            fs::create_dir_all(&cfg.out_dir)?;
            let splits = load_data(&cfg).context("data stage failed")?;
            let arch = resolve_architecture(&cfg, splits.train.dim());
            let mut log = c.log();
            for &loss in &cfg.losses {
                train_stage(&cfg, &splits, &arch, loss, &cfg.out_dir, &mut log)
                    .with_context(|| format!("train stage failed for {loss}"))?;
            }
        }
        Command::Analyze(c) => {
            let cfg = c.config(None)?;
            let splits = load_data(&cfg).context("data stage failed")?;
            let mut out = serde_json::Map::new();
            let mut intra = Vec::new();
            for &loss in &cfg.losses {
                let (arch, params, trace) = load_trained(&cfg.out_dir, loss)
                    .with_context(|| format!("no trained {loss} model in {}", cfg.out_dir.display()))?;
                let test_emb = embed_dataset(&params, &arch, &splits.test)?;
                let a = analyze_stage(&cfg, &test_emb, &splits.test, &trace, loss, &cfg.out_dir)
                    .context("analyze stage failed")?;
                intra.push((loss, a.variance.intra_values()));
                out.insert(loss.name().into(), serde_json::to_value(&a)?);
            }
            let find = |l| intra.iter().find(|(k, _)| *k == l).map(|(_, v)| v);
            if let (true, Some(c), Some(t)) =
                (cfg.analysis.t_test, find(LossKind::Contrastive), find(LossKind::Triplet))
            {
                let t = paired_t_test(t, c).context("t-test failed")?;
                out.insert("t_test".into(), serde_json::to_value(t)?);
            }
            write_json(cfg.out_dir.join("analysis.json"), &out)?;
        }
        Command::Eval(c) => {
            let cfg = c.config(None)?;
            let splits = load_data(&cfg).context("data stage failed")?;
            let mut out = serde_json::Map::new();
            for &loss in &cfg.losses {
                let (arch, params, _) = load_trained(&cfg.out_dir, loss)
                    .with_context(|| format!("no trained {loss} model in {}", cfg.out_dir.display()))?;
                let train_emb = embed_dataset(&params, &arch, &splits.train)?;
                let test_emb = embed_dataset(&params, &arch, &splits.test)?;
                let e = evaluate_stage(&cfg, &train_emb, &test_emb, &splits).context("eval stage failed")?;
                c.log()(&format!(
                    "[{loss}] kNN {:.4}  recall {:?}",
                    e.knn_accuracy, e.retrieval.recall_at
                ));
                out.insert(loss.name().into(), serde_json::to_value(&e)?);
            }
            write_json(cfg.out_dir.join("eval.json"), &out)?;
        }
        Command::CompareLosses(c) => {
            let cfg = c.config(Some(LossArg::Both))?;
            let report = run_experiment_logged(&cfg, &mut c.log())?;
            if !c.quiet {
                print!("{}", render_report(&report));
            }
        }
        Command::Report(c) => {
            let cfg = c.config(None)?;
            let path = cfg.out_dir.join("report.json");
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let report = RunReport::from_json(&text)?;
            for run in &report.runs {
                for f in run.artifacts.files() {
                    if !cfg.out_dir.join(f).is_file() {
                        bail!("report references missing file {f}");
                    }
                }
            }
            print!("{}", experiment::render_report(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
