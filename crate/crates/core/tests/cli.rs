use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use metric_lab::experiment::RunReport;

const SMALL: &str = r#"
seed = 4

[dataset.synthetic]
num_classes = 4
samples_per_class = 40
dim = 16

[model]
kind = "mlp"
dims = [16, 12, 6]

[train]
epochs = 3
batch_size = 32

[eval]
recall_ks = [1, 3]
"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metric-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn compare_losses_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = cli(&["compare-losses", "--config", &cfg, "--out", out.to_str().unwrap(), "--quiet"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ra = fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, fs::read(b.join("report.json")).unwrap());

    let report = RunReport::from_json(std::str::from_utf8(&ra).unwrap()).unwrap();
    assert_eq!(report.runs.len(), 2);
    assert!(report.comparison.as_ref().unwrap().t_test.is_some());
    assert_eq!(report.variance_table.len(), 2);
    for run in &report.runs {
        assert_eq!(run.evaluation.retrieval.ks, vec![1, 3]);
        for f in run.artifacts.files() {
            assert!(a.join(f).is_file(), "{f} missing");
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
        }
    }
    let csv = fs::read_to_string(a.join("pca_triplet.csv")).unwrap();
    assert!(csv.starts_with("label,pc1,pc2\n"));
    assert_eq!(csv.lines().count(), 1 + report.dataset.test_size);

    let o = cli(&["report", "--config", &cfg, "--out", a.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("intra ratio") && text.contains("R@3"));
}

#[test]
fn staged_subcommands_chain_through_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    for sub in ["generate", "train", "analyze", "eval"] {
        let o = cli(&[sub, "--config", &cfg, "--out", out, "--quiet"]);
        assert!(o.status.success(), "{sub}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["data.emb", "data.csv", "trace_contrastive.csv", "checkpoint_triplet.bin", "analysis.json", "eval.json", "pca_contrastive.svg"] {
        assert!(Path::new(out).join(f).is_file(), "{f}");
    }
    let analysis: serde_json::Value = serde_json::from_str(&fs::read_to_string(Path::new(out).join("analysis.json")).unwrap()).unwrap();
    assert!(analysis["t_test"]["p"].is_number());
    let trace = fs::read_to_string(Path::new(out).join("trace_triplet.csv")).unwrap();
    assert_eq!(trace.lines().count(), 4);
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let o = cli(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--loss", "triplet", "--epochs", "2", "--seed", "9", "--quiet"]);
    assert!(o.status.success());
    assert!(out.join("trace_triplet.csv").is_file());
    assert!(!out.join("trace_contrastive.csv").exists());
    assert_eq!(fs::read_to_string(out.join("trace_triplet.csv")).unwrap().lines().count(), 3);
}

#[test]
fn bad_configs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[train]\nmargin = -1.0\n");
    let o = cli(&["compare-losses", "--config", &cfg, "--quiet"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("margin"));

    let cfg = write_config(dir.path(), "[train]\nepochs = \"many\"\n");
    let o = cli(&["compare-losses", "--config", &cfg, "--quiet"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn failing_stage_is_named() {
    let dir = tempfile::tempdir().unwrap();
    // six samples leave a one-sample test split, too small for class statistics
    let cfg = write_config(
        dir.path(),
        "[dataset.synthetic]\nnum_classes = 2\nsamples_per_class = 3\ndim = 4\noutlier_fraction = 0.0\n[model]\nkind = \"mlp\"\ndims = [4, 3]\n[train]\nepochs = 1\nbatch_size = 4\n[eval]\ntest_fraction = 0.2\nrecall_ks = [1]\n",
    );
    let o = cli(&["compare-losses", "--config", &cfg, "--out", dir.path().join("r").to_str().unwrap(), "--quiet"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stage failed"), "{err}");
}
