//! Checks backpropagation through an MLP encoder and the triplet loss
//! against central differences.

use metric_lab::losses::{sample_triplets, triplet_loss};
use metric_lab::model::{encode, encode_backward, init_params, Architecture, ModelParams};
use metric_lab::numcore::{gaussian_matrix, grad_check, RngStream, Tensor};

fn main() -> metric_lab::Result<()> {
    let arch = Architecture::Mlp { dims: vec![10, 32, 6] };
    let mut rng = RngStream::new(3);
    let params = init_params(&arch, &mut rng)?;
    let x = gaussian_matrix(&mut rng, 12, 10);
    let labels: Vec<i32> = (0..12).map(|i| i % 3).collect();
    let batch: Vec<usize> = (0..12).collect();
    let triplets = sample_triplets(&labels, &batch, 1.0, &mut rng)?;

    let objective = |p: &[Tensor]| {
        let params = ModelParams { tensors: p.to_vec() };
        let (z, cache) = encode(&params, &arch, &x)?;
        let out = triplet_loss(&z, &triplets)?;
        let grads = encode_backward(&params, &cache, &out.grad_embeddings)?;
        Ok((out.total, grads))
    };
    let (loss, _) = objective(&params.tensors)?;
    let err = grad_check(objective, &params.tensors, 1e-6)?;
    println!("loss {loss:.6}, {} parameters", params.num_scalars());
    println!("max relative gradient error {err:.3e}");
    Ok(())
}
