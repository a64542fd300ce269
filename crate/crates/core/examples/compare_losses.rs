//! The full pipeline for both losses on the default synthetic data: the same
//! thing `metric-lab compare-losses` does.

use metric_lab::experiment::{render_report, run_experiment_logged, ExperimentConfig};

fn main() -> metric_lab::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = ExperimentConfig {
        seed,
        out_dir: format!("runs/compare-seed{seed}").into(),
        ..ExperimentConfig::default()
    };
    let report = run_experiment_logged(&cfg, &mut |line| {
        if !line.contains("epoch") || line.contains("epoch  50") {
            eprintln!("{line}");
        }
    })?;
    print!("{}", render_report(&report));
    println!("\nartifacts in {}", cfg.out_dir.display());
    Ok(())
}
