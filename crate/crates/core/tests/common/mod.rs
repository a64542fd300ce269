//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use metric_lab::losses::{
    contrastive_loss, sample_pairs, sample_triplets, triplet_loss, LossKind, LossOutput,
};
use metric_lab::model::{encode, encode_backward, init_params, Architecture, CnnSpec, ModelParams};
use metric_lab::numcore::{RngStream, Tensor};
use metric_lab::Result;

/// Per-class variance mean and ordered-pair squared centroid separation,
/// written as plain loops.
pub fn brute_force_variance(z: &Tensor, labels: &[i32]) -> (f64, f64) {
    let d = z.row_len();
    let mut classes: Vec<i32> = labels.iter().copied().filter(|&l| l != -1).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut centroids = Vec::new();
    let mut intra_sum = 0.0;
    for &c in &classes {
        let mut mu = vec![0.0; d];
        let mut count = 0.0;
        for i in 0..labels.len() {
            if labels[i] == c {
                for j in 0..d {
                    mu[j] += z.get2(i, j);
                }
                count += 1.0;
            }
        }
        for m in &mut mu {
            *m /= count;
        }
        let mut spread = 0.0;
        for i in 0..labels.len() {
            if labels[i] == c {
                for j in 0..d {
                    spread += (z.get2(i, j) - mu[j]).powi(2);
                }
            }
        }
        intra_sum += spread / count;
        centroids.push(mu);
    }
    let nc = classes.len();
    let mut inter = 0.0;
    for a in 0..nc {
        for b in 0..nc {
            if a != b {
                for j in 0..d {
                    inter += (centroids[a][j] - centroids[b][j]).powi(2);
                }
            }
        }
    }
    (intra_sum / nc as f64, inter / (nc * (nc - 1)) as f64)
}

/// recall@k by sorting every gallery item for every query.
pub fn naive_recall(
    q: &Tensor,
    ql: &[i32],
    g: &Tensor,
    gl: &[i32],
    ks: &[usize],
    exclude_self: bool,
) -> BTreeMap<usize, f64> {
    let queries: Vec<usize> = (0..ql.len()).filter(|&i| ql[i] != -1).collect();
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    for &i in &queries {
        let mut ranked: Vec<(f64, usize)> = Vec::new();
        for j in 0..gl.len() {
            if gl[j] == -1 || (exclude_self && i == j) {
                continue;
            }
            let d: f64 = q.row(i).iter().zip(g.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            ranked.push((d, j));
        }
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for &k in ks {
            if ranked.iter().take(k).any(|&(_, j)| gl[j] == ql[i]) {
                *hits.get_mut(&k).unwrap() += 1;
            }
        }
    }
    hits.into_iter()
        .map(|(k, h)| (k, h as f64 / queries.len() as f64))
        .collect()
}

/// Random orthogonal matrix from Gram–Schmidt on Gaussian columns.
pub fn random_rotation(rng: &mut RngStream, d: usize) -> Tensor {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    Tensor::from_rows(&basis).unwrap()
}

/// Unit-norm rows.
pub fn normalize_rows(z: &Tensor) -> Tensor {
    let mut out = z.clone();
    for r in 0..out.rows() {
        let n = out.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        out.row_mut(r).iter_mut().for_each(|v| *v /= n);
    }
    out
}

fn small_cnn() -> Architecture {
    Architecture::Cnn(CnnSpec {
        in_channels: 1,
        height: 8,
        width: 8,
        channels: vec![2, 3],
        kernel: 3,
        padding: 1,
        pool: 2,
        hidden: vec![16, 4],
    })
}

pub fn gradient_encoders() -> Vec<(&'static str, Architecture)> {
    vec![
        ("mlp", Architecture::Mlp { dims: vec![6, 24, 4] }),
        ("cnn", small_cnn()),
        ("head", Architecture::Head { input: 7, output: 5 }),
    ]
}

/// Loss of an encoder on a fixed batch and a fixed pair/triplet sample.
/// Initialized parameters with every entry, biases included, jittered so the
/// check does not sit on the zero-bias starting point.
pub fn random_params(arch: &Architecture, rng: &mut RngStream) -> ModelParams {
    let mut p = init_params(arch, rng).unwrap();
    for t in &mut p.tensors {
        t.data_mut().iter_mut().for_each(|v| *v += 0.05 * rng.normal());
    }
    p
}

pub fn encoder_objective<'a>(
    arch: &'a Architecture,
    x: &'a Tensor,
    labels: &[i32],
    loss: LossKind,
    margin: f64,
    seed: u64,
) -> impl Fn(&[Tensor]) -> Result<(f64, Vec<Tensor>)> + 'a {
    let batch: Vec<usize> = (0..labels.len()).collect();
    let mut rng = RngStream::new(seed);
    let pairs = sample_pairs(labels, &batch, margin, &mut rng).unwrap();
    let triplets = sample_triplets(labels, &batch, margin, &mut rng).unwrap();
    move |p: &[Tensor]| {
        let params = ModelParams { tensors: p.to_vec() };
        let (z, cache) = encode(&params, arch, x)?;
        let out: LossOutput = match loss {
            LossKind::Contrastive => contrastive_loss(&z, &pairs)?,
            LossKind::Triplet => triplet_loss(&z, &triplets)?,
        };
        let g = encode_backward(&params, &cache, &out.grad_embeddings)?;
        Ok((out.total, g))
    }
}

