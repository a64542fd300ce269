//! Projects trained embeddings onto their top two principal components and
//! writes a CSV and an SVG scatter.

use metric_lab::analysis::{pca_csv, pca_project};
use metric_lab::datagen::{generate_synthetic, SyntheticConfig};
use metric_lab::experiment::scatter_svg;
use metric_lab::losses::LossKind;
use metric_lab::model::Architecture;
use metric_lab::trainer::{embed_dataset, train, TrainConfig};

fn main() -> metric_lab::Result<()> {
    let data = generate_synthetic(&SyntheticConfig::with_seed(2))?;
    let arch = Architecture::default_mlp();
    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::new(LossKind::Triplet)
    };
    let (params, _) = train(&data, &arch, &cfg)?;
    let z = embed_dataset(&params, &arch, &data)?;

    let pca = pca_project(&z, 5)?;
    for (i, f) in pca.explained_fraction.iter().enumerate() {
        println!("pc{}: {:.1}%", i + 1, 100.0 * f);
    }
    let points: Vec<(f64, f64)> = (0..pca.projected.rows())
        .map(|r| (pca.projected.get2(r, 0), pca.projected.get2(r, 1)))
        .collect();
    std::fs::create_dir_all("runs")?;
    std::fs::write("runs/pca_example.csv", pca_csv(&pca, data.labels())?)?;
    std::fs::write("runs/pca_example.svg", scatter_svg("triplet, 20 epochs", &points, data.labels()))?;
    println!("wrote runs/pca_example.csv and runs/pca_example.svg");
    Ok(())
}
