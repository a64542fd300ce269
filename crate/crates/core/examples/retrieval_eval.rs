//! kNN classification and leave-one-out recall@k on held-out embeddings.

use metric_lab::datagen::{generate_synthetic, SyntheticConfig};
use metric_lab::eval::{knn_classify, recall_at_k};
use metric_lab::losses::LossKind;
use metric_lab::model::Architecture;
use metric_lab::numcore::RngStream;
use metric_lab::trainer::{embed_dataset, train, TrainConfig};

fn main() -> metric_lab::Result<()> {
    let data = generate_synthetic(&SyntheticConfig::with_seed(0))?;
    let (train_set, test_set) = data.split(0.2, &mut RngStream::new(7))?;
    let arch = Architecture::default_mlp();

    println!("{:<12} {:>8} {:>8} {:>8} {:>8}", "loss", "kNN@5", "R@1", "R@5", "R@10");
    for loss in [LossKind::Contrastive, LossKind::Triplet] {
        let (params, _) = train(&train_set, &arch, &TrainConfig::new(loss))?;
        let tr = embed_dataset(&params, &arch, &train_set)?;
        let te = embed_dataset(&params, &arch, &test_set)?;
        let acc = knn_classify(&tr, train_set.labels(), &te, test_set.labels(), 5)?;
        let r = recall_at_k(&te, test_set.labels(), &te, test_set.labels(), &[1, 5, 10], true)?;
        println!(
            "{:<12} {acc:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            loss.name(),
            r.recall_at[&1],
            r.recall_at[&5],
            r.recall_at[&10]
        );
    }
    Ok(())
}
