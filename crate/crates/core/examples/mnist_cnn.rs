//! Small CNN on an MNIST subset. Expects the IDX files in `data/mnist`
//! (see `scripts/fetch_mnist.sh`) or in the directory given as argument.

use std::path::PathBuf;

use metric_lab::datagen::load_idx;
use metric_lab::eval::knn_classify;
use metric_lab::losses::LossKind;
use metric_lab::model::Architecture;
use metric_lab::trainer::{embed_dataset, train_observed, TrainConfig};

fn main() -> metric_lab::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/mnist".into()));
    let train_set = load_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?.head(3000);
    let test_set = load_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?.head(1000);

    let arch = Architecture::default_cnn();
    let cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::new(LossKind::Triplet)
    };
    let (params, _) = train_observed(&train_set, &arch, &cfg, |r| {
        println!("epoch {}  loss {:.4}  active {:.3}", r.epoch, r.mean_loss, r.active_ratio)
    })?;
    let tr = embed_dataset(&params, &arch, &train_set)?;
    let te = embed_dataset(&params, &arch, &test_set)?;
    let acc = knn_classify(&tr, train_set.labels(), &te, test_set.labels(), 5)?;
    println!("5-NN accuracy on {} test digits: {acc:.4}", test_set.len());
    Ok(())
}
