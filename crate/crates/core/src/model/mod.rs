//! Encoders: an MLP for vector data, a small CNN for images, and a single
//! affine head for precomputed features. Every encoder ends in row-wise L2
//! normalization, so embeddings live on the unit sphere.

mod checkpoint;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint};

use crate::error::{Error, Result};
use crate::numcore::{LayerCache, LayerKind, RngStream, Tensor};

/// Weight init bound is `INIT_GAIN / sqrt(fan_in)` (uniform), biases start at 0.
pub const INIT_GAIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// Dense layers with ReLU between them; no activation on the last one.
    Mlp { dims: Vec<usize> },
    Cnn(CnnSpec),
    /// One affine projection over frozen features.
    Head { input: usize, output: usize },
}

/// `[conv(k, pad) → ReLU → maxpool(pool)]` per entry of `channels`, then
/// flatten and dense layers through `hidden` (ReLU between them).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnSpec {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub padding: usize,
    pub pool: usize,
    pub hidden: Vec<usize>,
}

impl Default for CnnSpec {
    fn default() -> Self {
        Self {
            in_channels: 1,
            height: 28,
            width: 28,
            channels: vec![8, 16],
            kernel: 3,
            padding: 1,
            pool: 2,
            hidden: vec![128, 64],
        }
    }
}

impl Architecture {
    pub fn default_mlp() -> Self {
        Architecture::Mlp {
            dims: vec![128, 64, 32],
        }
    }

    pub fn default_cnn() -> Self {
        Architecture::Cnn(CnnSpec::default())
    }

    pub fn default_head(input: usize) -> Self {
        Architecture::Head { input, output: 512 }
    }

    /// Flattened input width expected per sample.
    pub fn input_dim(&self) -> usize {
        match self {
            Architecture::Mlp { dims } => dims.first().copied().unwrap_or(0),
            Architecture::Cnn(s) => s.in_channels * s.height * s.width,
            Architecture::Head { input, .. } => *input,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Architecture::Mlp { dims } => dims.last().copied().unwrap_or(0),
            Architecture::Cnn(s) => s.hidden.last().copied().unwrap_or(0),
            Architecture::Head { output, .. } => *output,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Validation(m));
        match self {
            Architecture::Mlp { dims } => {
                if dims.len() < 2 || dims.contains(&0) {
                    return err(format!("mlp dims {dims:?} need ≥ 2 positive entries"));
                }
            }
            Architecture::Head { input, .. } => {
                if *input == 0 {
                    return err("head input must be positive".into());
                }
            }
            Architecture::Cnn(s) => {
                if s.hidden.is_empty() || s.hidden.contains(&0) || s.channels.contains(&0) {
                    return err("cnn channels and hidden sizes must be positive and non-empty".into());
                }
                // Walks the shapes so an impossible geometry fails here.
                let mut shape = vec![1, s.in_channels, s.height, s.width];
                for layer in self.layers() {
                    shape = layer.output_shape(&shape).map_err(|e| {
                        Error::Validation(format!("cnn geometry: {e}"))
                    })?;
                }
            }
        }
        if self.output_dim() < 2 {
            return err(format!("embedding dimension {} must be ≥ 2", self.output_dim()));
        }
        Ok(())
    }

    /// The layer sequence, ending in L2 normalization.
    pub fn layers(&self) -> Vec<LayerKind> {
        let mut layers = Vec::new();
        let dense = |layers: &mut Vec<LayerKind>, dims: &[usize]| {
            for (i, w) in dims.windows(2).enumerate() {
                if i > 0 {
                    layers.push(LayerKind::Relu);
                }
                layers.push(LayerKind::Affine {
                    inputs: w[0],
                    outputs: w[1],
                });
            }
        };
        match self {
            Architecture::Mlp { dims } => dense(&mut layers, dims),
            Architecture::Head { input, output } => dense(&mut layers, &[*input, *output]),
            Architecture::Cnn(s) => {
                let (mut c, mut h, mut w) = (s.in_channels, s.height, s.width);
                for &out in &s.channels {
                    layers.push(LayerKind::Conv2d {
                        in_channels: c,
                        out_channels: out,
                        kernel: s.kernel,
                        padding: s.padding,
                    });
                    layers.push(LayerKind::Relu);
                    layers.push(LayerKind::MaxPool2d { size: s.pool });
                    c = out;
                    h = (h + 2 * s.padding + 1).saturating_sub(s.kernel) / s.pool.max(1);
                    w = (w + 2 * s.padding + 1).saturating_sub(s.kernel) / s.pool.max(1);
                }
                let mut dims = vec![c * h * w];
                dims.extend(&s.hidden);
                layers.push(LayerKind::Affine {
                    inputs: dims[0],
                    outputs: dims[1],
                });
                for win in dims[1..].windows(2) {
                    layers.push(LayerKind::Relu);
                    layers.push(LayerKind::Affine {
                        inputs: win[0],
                        outputs: win[1],
                    });
                }
            }
        }
        layers.push(LayerKind::L2Norm);
        layers
    }

    fn batch_shape(&self, n: usize) -> Vec<usize> {
        match self {
            Architecture::Cnn(s) => vec![n, s.in_channels, s.height, s.width],
            _ => vec![n, self.input_dim()],
        }
    }
}

/// Parameter tensors of all layers, in layer order (weight, then bias).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub tensors: Vec<Tensor>,
}

impl ModelParams {
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

/// Uniform fan-in init: `W ~ U(-g/√fan_in, g/√fan_in)` with `g = INIT_GAIN`,
/// biases zero.
pub fn init_params(arch: &Architecture, rng: &mut RngStream) -> Result<ModelParams> {
    arch.validate()?;
    let mut tensors = Vec::new();
    for layer in arch.layers() {
        let shapes = layer.param_shapes();
        if shapes.is_empty() {
            continue;
        }
        let bound = INIT_GAIN / (layer.fan_in().unwrap_or(1) as f64).sqrt();
        let w_shape = &shapes[0];
        let len: usize = w_shape.iter().product();
        let w = (0..len).map(|_| rng.uniform_range(-bound, bound)).collect();
        tensors.push(Tensor::new(w_shape.clone(), w)?);
        tensors.push(Tensor::zeros(&shapes[1]));
    }
    Ok(ModelParams { tensors })
}

/// Forward state retained for [`encode_backward`].
#[derive(Debug, Clone)]
pub struct EncodeCache {
    layers: Vec<LayerKind>,
    caches: Vec<LayerCache>,
    embedding_shape: Vec<usize>,
}

/// Encodes a batch (`N × input_dim`) into unit-norm embeddings.
pub fn encode(
    params: &ModelParams,
    arch: &Architecture,
    batch: &Tensor,
) -> Result<(Tensor, EncodeCache)> {
    if batch.shape().len() < 2 || batch.row_len() != arch.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "batch shape {:?} does not match input width {}",
            batch.shape(),
            arch.input_dim()
        )));
    }
    let layers = arch.layers();
    let mut x = batch.clone().reshape(&arch.batch_shape(batch.rows()))?;
    let mut caches = Vec::with_capacity(layers.len());
    let mut offset = 0;
    for layer in &layers {
        let np = layer.param_count();
        let p = params
            .tensors
            .get(offset..offset + np)
            .ok_or_else(|| Error::ShapeMismatch("too few parameter tensors".into()))?;
        let (y, cache) = layer.forward(p, &x)?;
        caches.push(cache);
        x = y;
        offset += np;
    }
    if offset != params.tensors.len() {
        return Err(Error::ShapeMismatch(format!(
            "architecture uses {offset} parameter tensors, got {}",
            params.tensors.len()
        )));
    }
    let cache = EncodeCache {
        layers,
        caches,
        embedding_shape: x.shape().to_vec(),
    };
    Ok((x, cache))
}

/// Gradient of `⟨grad_embeddings, embeddings⟩` with respect to every
/// parameter tensor.
pub fn encode_backward(
    params: &ModelParams,
    cache: &EncodeCache,
    grad_embeddings: &Tensor,
) -> Result<Vec<Tensor>> {
    if grad_embeddings.shape() != cache.embedding_shape.as_slice() {
        return Err(Error::ShapeMismatch(format!(
            "embedding gradient {:?}, expected {:?}",
            grad_embeddings.shape(),
            cache.embedding_shape
        )));
    }
    let mut grads: Vec<Tensor> = Vec::with_capacity(params.tensors.len());
    let mut upstream = grad_embeddings.clone();
    let mut offset = params.tensors.len();
    for (i, (layer, lc)) in cache.layers.iter().zip(&cache.caches).enumerate().rev() {
        let np = layer.param_count();
        offset -= np;
        let p = &params.tensors[offset..offset + np];
        let (dx, dp) = layer.backward(p, lc, &upstream, i > 0)?;
        for g in dp.into_iter().rev() {
            grads.push(g);
        }
        upstream = dx;
    }
    grads.reverse();
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::gaussian_matrix;

    #[test]
    fn default_mlp_shapes() {
        let p = init_params(&Architecture::default_mlp(), &mut RngStream::new(0)).unwrap();
        let shapes: Vec<&[usize]> = p.tensors.iter().map(|t| t.shape()).collect();
        assert_eq!(shapes, vec![&[128, 64][..], &[64], &[64, 32], &[32]]);
    }

    #[test]
    fn default_cnn_layers() {
        let arch = Architecture::default_cnn();
        arch.validate().unwrap();
        let p = init_params(&arch, &mut RngStream::new(0)).unwrap();
        let shapes: Vec<Vec<usize>> = p.tensors.iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(
            shapes,
            vec![
                vec![8, 1, 3, 3],
                vec![8],
                vec![16, 8, 3, 3],
                vec![16],
                vec![16 * 7 * 7, 128],
                vec![128],
                vec![128, 64],
                vec![64],
            ]
        );
        assert_eq!(arch.output_dim(), 64);
    }

    #[test]
    fn init_is_deterministic() {
        let arch = Architecture::default_mlp();
        let a = init_params(&arch, &mut RngStream::new(9)).unwrap();
        let b = init_params(&arch, &mut RngStream::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_spread_matches_uniform_bound() {
        let arch = Architecture::Mlp {
            dims: vec![128, 100, 2],
        };
        let p = init_params(&arch, &mut RngStream::new(4)).unwrap();
        let w = p.tensors[0].data();
        assert!(w.len() >= 10_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
        let target = INIT_GAIN / 128f64.sqrt() / 3f64.sqrt();
        assert!((std / target - 1.0).abs() < 0.2, "std {std} vs {target}");
        assert!(p.tensors[1].data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn embeddings_unit_norm() {
        let arch = Architecture::Mlp {
            dims: vec![6, 32, 3],
        };
        let p = init_params(&arch, &mut RngStream::new(1)).unwrap();
        let x = gaussian_matrix(&mut RngStream::new(2), 10, 6);
        let (z, _) = encode(&p, &arch, &x).unwrap();
        for i in 0..10 {
            let n: f64 = z.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_weights_underflow() {
        let arch = Architecture::Mlp {
            dims: vec![4, 3, 2],
        };
        let mut p = init_params(&arch, &mut RngStream::new(1)).unwrap();
        p.tensors.iter_mut().for_each(|t| t.data_mut().fill(0.0));
        let x = gaussian_matrix(&mut RngStream::new(2), 3, 4);
        assert!(matches!(
            encode(&p, &arch, &x),
            Err(Error::NumericalUnderflow { .. })
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let arch = Architecture::Mlp {
            dims: vec![4, 3, 2],
        };
        let p = init_params(&arch, &mut RngStream::new(1)).unwrap();
        let x = gaussian_matrix(&mut RngStream::new(2), 5, 4);
        let (z, cache) = encode(&p, &arch, &x).unwrap();
        let g = encode_backward(&p, &cache, &Tensor::zeros(z.shape())).unwrap();
        assert_eq!(g.len(), p.tensors.len());
        assert!(g.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn rejects_wrong_input_width() {
        let arch = Architecture::default_mlp();
        let p = init_params(&arch, &mut RngStream::new(1)).unwrap();
        assert!(encode(&p, &arch, &Tensor::zeros(&[2, 127])).is_err());
    }

    #[test]
    fn degenerate_architectures_rejected() {
        assert!(Architecture::Mlp { dims: vec![4, 1] }.validate().is_err());
        assert!(Architecture::Mlp { dims: vec![4] }.validate().is_err());
        let tiny = Architecture::Cnn(CnnSpec {
            height: 2,
            width: 2,
            ..CnnSpec::default()
        });
        assert!(tiny.validate().is_err());
    }
}
