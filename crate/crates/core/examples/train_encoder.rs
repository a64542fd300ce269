//! Trains an MLP on the synthetic clusters with one loss and prints the
//! per-epoch diagnostics.
//!
//! ```text
//! cargo run --release --example train_encoder -- triplet 30
//! ```

use metric_lab::datagen::{generate_synthetic, SyntheticConfig};
use metric_lab::losses::LossKind;
use metric_lab::model::{save_checkpoint, Architecture};
use metric_lab::trainer::{train_observed, TrainConfig};

fn main() -> metric_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let loss: LossKind = args.next().as_deref().unwrap_or("triplet").parse()?;
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);

    let data = generate_synthetic(&SyntheticConfig::with_seed(0))?;
    let arch = Architecture::default_mlp();
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::new(loss)
    };
    let (params, trace) = train_observed(&data, &arch, &cfg, |r| {
        println!(
            "epoch {:>3}  loss {:.5}  active {:>5.1}%  grad {:.4}",
            r.epoch,
            r.mean_loss,
            100.0 * r.active_ratio,
            r.grad_norm
        );
    })?;

    std::fs::create_dir_all("runs")?;
    save_checkpoint(format!("runs/example_{loss}.bin"), &arch, &params)?;
    trace.write_csv(format!("runs/example_trace_{loss}.csv"))?;
    Ok(())
}
