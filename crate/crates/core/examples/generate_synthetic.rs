//! Gaussian clusters with label noise and outliers, written as EMB1 and CSV.
//!
//! ```text
//! cargo run --release --example generate_synthetic -- [seed] [out_dir]
//! ```

use std::path::PathBuf;

use metric_lab::datagen::{generate_synthetic, save_csv, save_embeddings, SyntheticConfig};

fn main() -> metric_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/synthetic-data".into()));
    std::fs::create_dir_all(&out)?;

    let cfg = SyntheticConfig::with_seed(seed);
    let data = generate_synthetic(&cfg)?;
    println!(
        "{} samples, {} features, {} classes, {} outliers",
        data.len(),
        data.dim(),
        data.classes().len(),
        data.num_outliers()
    );

    // how many points carry a label other than the cluster they came from
    let clustered = cfg.num_classes * cfg.samples_per_class;
    let moved = data.labels()[..clustered]
        .iter()
        .enumerate()
        .filter(|&(i, &l)| l != (i / cfg.samples_per_class) as i32)
        .count();
    println!("relabelled: {moved} of {clustered}");

    save_embeddings(&data, out.join("synthetic.emb"))?;
    save_csv(&data, out.join("synthetic.csv"))?;
    println!("wrote {}", out.display());
    Ok(())
}
