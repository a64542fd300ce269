//! Intra- and inter-class variance of held-out embeddings for both losses,
//! with a paired t-test over per-class spreads.

use metric_lab::analysis::{paired_t_test, variance_report};
use metric_lab::datagen::{generate_synthetic, SyntheticConfig};
use metric_lab::losses::LossKind;
use metric_lab::model::Architecture;
use metric_lab::numcore::RngStream;
use metric_lab::trainer::{embed_dataset, train, TrainConfig};

fn main() -> metric_lab::Result<()> {
    let data = generate_synthetic(&SyntheticConfig::with_seed(1))?;
    let (train_set, test_set) = data.split(0.2, &mut RngStream::new(99))?;
    let arch = Architecture::default_mlp();

    let mut spreads = Vec::new();
    for loss in [LossKind::Contrastive, LossKind::Triplet] {
        let (params, _) = train(&train_set, &arch, &TrainConfig::new(loss))?;
        let z = embed_dataset(&params, &arch, &test_set)?;
        let v = variance_report(&z, test_set.labels())?;
        println!(
            "{:<12} intra μ {:.4} σ² {:.2e} | inter μ {:.4} σ² {:.2e} | inter μ² {:.4}",
            loss.name(),
            v.intra_mean, v.intra_var, v.inter_mean_dist, v.inter_var, v.inter_mean_sq
        );
        for (class, s) in &v.per_class_intra {
            println!("    class {class}: {s:.4}");
        }
        spreads.push(v.intra_values());
    }
    let t = paired_t_test(&spreads[1], &spreads[0])?;
    println!("triplet vs contrastive: t = {:.2}, df = {}, p = {:.2e}", t.t, t.df, t.p);
    Ok(())
}
