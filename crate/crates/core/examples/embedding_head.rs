//! Trains only a projection head over precomputed features, read back from
//! an EMB1 file, as one would over frozen backbone outputs.

use metric_lab::datagen::{generate_synthetic, load_embeddings, save_embeddings, SyntheticConfig};
use metric_lab::eval::recall_at_k;
use metric_lab::losses::LossKind;
use metric_lab::model::Architecture;
use metric_lab::numcore::RngStream;
use metric_lab::trainer::{embed_dataset, train, TrainConfig};

fn main() -> metric_lab::Result<()> {
    // stand-in for backbone features
    let features = generate_synthetic(&SyntheticConfig {
        dim: 64,
        ..SyntheticConfig::with_seed(5)
    })?;
    std::fs::create_dir_all("runs")?;
    save_embeddings(&features, "runs/features.emb")?;

    let data = load_embeddings("runs/features.emb")?;
    let (train_set, test_set) = data.split(0.2, &mut RngStream::new(1))?;
    let arch = Architecture::Head { input: data.dim(), output: 32 };
    for loss in [LossKind::Contrastive, LossKind::Triplet] {
        let cfg = TrainConfig {
            epochs: 20,
            ..TrainConfig::new(loss)
        };
        let (params, trace) = train(&train_set, &arch, &cfg)?;
        let z = embed_dataset(&params, &arch, &test_set)?;
        let r = recall_at_k(&z, test_set.labels(), &z, test_set.labels(), &[1, 5], true)?;
        println!(
            "{:<12} final loss {:.4}  R@1 {:.4}  R@5 {:.4}",
            loss.name(),
            trace.losses().last().copied().unwrap_or(f64::NAN),
            r.recall_at[&1],
            r.recall_at[&5]
        );
    }
    Ok(())
}
