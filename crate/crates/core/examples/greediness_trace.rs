//! Loss decay, active ratio and gradient norm for both losses, read off the
//! training traces.

use metric_lab::analysis::greediness_report;
use metric_lab::datagen::{generate_synthetic, SyntheticConfig};
use metric_lab::losses::LossKind;
use metric_lab::model::Architecture;
use metric_lab::trainer::{train, TrainConfig};

fn main() -> metric_lab::Result<()> {
    let data = generate_synthetic(&SyntheticConfig::with_seed(0))?;
    let arch = Architecture::default_mlp();
    for loss in [LossKind::Contrastive, LossKind::Triplet] {
        let (_, trace) = train(&data, &arch, &TrainConfig::new(loss))?;
        let g = greediness_report(&trace, 10);
        let losses = trace.losses();
        println!(
            "{:<12} loss {:.4} -> {:.4}  decay epoch {:>5}  active {:>5.1}%  grad {:.3}",
            loss.name(),
            losses[0],
            losses[losses.len() - 1],
            g.decay_epoch.map_or("never".into(), |e| e.to_string()),
            100.0 * g.mean_active_ratio,
            g.mean_grad_norm
        );
    }
    Ok(())
}
