//! Layer primitives with hand-derived backward passes.
//!
//! Activations are batch-major: dense layers see `N × D`, convolution and
//! pooling see `N × C × H × W`. A dense layer accepts any input whose
//! trailing dimensions multiply to its fan-in, which makes flattening free.

use serde::{Deserialize, Serialize};

use super::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};
use crate::error::{Error, Result};

/// Rows whose L2 norm falls below this are rejected by [`LayerKind::L2Norm`].
pub const L2NORM_MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    /// `y = x·W + b`, with `W` stored `inputs × outputs`.
    Affine { inputs: usize, outputs: usize },
    /// Subgradient at exactly 0 is 0.
    Relu,
    /// Stride-1 convolution with symmetric zero padding. Kernel tensor is
    /// `out × in × k × k`.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
    },
    /// Non-overlapping max pooling (stride = size). Ties go to the first
    /// maximum in row-major window order.
    MaxPool2d { size: usize },
    /// Row-wise `v / ‖v‖₂`.
    L2Norm,
}

/// Saved forward state needed by the backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Affine { input: Tensor },
    Relu { input: Tensor },
    Conv2d { input_shape: Vec<usize>, cols: Vec<f64> },
    MaxPool2d { input_shape: Vec<usize>, argmax: Vec<usize> },
    L2Norm { output: Tensor, norms: Vec<f64> },
}

impl LayerKind {
    pub fn param_count(&self) -> usize {
        match self {
            LayerKind::Affine { .. } | LayerKind::Conv2d { .. } => 2,
            _ => 0,
        }
    }

    /// Shapes of this layer's parameter tensors, in storage order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerKind::Affine { inputs, outputs } => vec![vec![inputs, outputs], vec![outputs]],
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                vec![out_channels, in_channels, kernel, kernel],
                vec![out_channels],
            ],
            _ => vec![],
        }
    }

    /// Fan-in of a weight-bearing layer.
    pub fn fan_in(&self) -> Option<usize> {
        match *self {
            LayerKind::Affine { inputs, .. } => Some(inputs),
            LayerKind::Conv2d {
                in_channels,
                kernel,
                ..
            } => Some(in_channels * kernel * kernel),
            _ => None,
        }
    }

    /// Output shape for a given input shape (batch dimension included).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerKind::Affine { inputs, outputs } => {
                let row: usize = input[1..].iter().product();
                if input.len() < 2 || row != inputs {
                    return Err(Error::ShapeMismatch(format!(
                        "affine expects {inputs} features per row, input shape {input:?}"
                    )));
                }
                Ok(vec![input[0], outputs])
            }
            LayerKind::Relu | LayerKind::L2Norm => {
                if input.len() < 2 {
                    return Err(Error::ShapeMismatch(format!(
                        "expected a batch, got shape {input:?}"
                    )));
                }
                Ok(input.to_vec())
            }
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
            } => {
                let [n, c, h, w] = dims4(input)?;
                if c != in_channels || h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(Error::ShapeMismatch(format!(
                        "conv2d({in_channels}->{out_channels}, k={kernel}) on input {input:?}"
                    )));
                }
                Ok(vec![
                    n,
                    out_channels,
                    h + 2 * padding - kernel + 1,
                    w + 2 * padding - kernel + 1,
                ])
            }
            LayerKind::MaxPool2d { size } => {
                let [n, c, h, w] = dims4(input)?;
                if size == 0 || h < size || w < size {
                    return Err(Error::ShapeMismatch(format!(
                        "maxpool({size}) on input {input:?}"
                    )));
                }
                Ok(vec![n, c, h / size, w / size])
            }
        }
    }

    fn check_params(&self, params: &[Tensor]) -> Result<()> {
        let shapes = self.param_shapes();
        if params.len() != shapes.len()
            || params.iter().zip(&shapes).any(|(p, s)| p.shape() != s.as_slice())
        {
            return Err(Error::ShapeMismatch(format!(
                "{self:?} expects parameter shapes {shapes:?}"
            )));
        }
        Ok(())
    }

    pub fn forward(&self, params: &[Tensor], input: &Tensor) -> Result<(Tensor, LayerCache)> {
        self.check_params(params)?;
        let out_shape = self.output_shape(input.shape())?;
        match *self {
            LayerKind::Affine { inputs, outputs } => {
                let n = input.rows();
                let mut out = Vec::with_capacity(n * outputs);
                for _ in 0..n {
                    out.extend_from_slice(params[1].data());
                }
                gemm_nn(n, inputs, outputs, input.data(), params[0].data(), &mut out);
                let cache = LayerCache::Affine {
                    input: input.clone(),
                };
                Ok((Tensor::new(out_shape, out)?, cache))
            }
            LayerKind::Relu => {
                let data = input.data().iter().map(|&v| v.max(0.0)).collect();
                let cache = LayerCache::Relu {
                    input: input.clone(),
                };
                Ok((Tensor::new(out_shape, data)?, cache))
            }
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
            } => {
                let [n, _, h, w] = dims4(input.shape())?;
                let (ho, wo) = (out_shape[2], out_shape[3]);
                let patch = in_channels * kernel * kernel;
                let spatial = ho * wo;
                let mut cols = vec![0.0; n * patch * spatial];
                let mut out = vec![0.0; n * out_channels * spatial];
                let geo = ConvGeometry {
                    channels: in_channels,
                    h,
                    w,
                    kernel,
                    padding,
                    ho,
                    wo,
                };
                for s in 0..n {
                    let img = input.row(s);
                    let col = &mut cols[s * patch * spatial..(s + 1) * patch * spatial];
                    geo.im2col(img, col);
                    let o = &mut out[s * out_channels * spatial..(s + 1) * out_channels * spatial];
                    for (oc, chunk) in o.chunks_mut(spatial).enumerate() {
                        chunk.fill(params[1].data()[oc]);
                    }
                    gemm_nn(out_channels, patch, spatial, params[0].data(), col, o);
                }
                let cache = LayerCache::Conv2d {
                    input_shape: input.shape().to_vec(),
                    cols,
                };
                Ok((Tensor::new(out_shape, out)?, cache))
            }
            LayerKind::MaxPool2d { size } => {
                let [n, c, h, w] = dims4(input.shape())?;
                let (ho, wo) = (h / size, w / size);
                let x = input.data();
                let mut out = Vec::with_capacity(n * c * ho * wo);
                let mut argmax = Vec::with_capacity(n * c * ho * wo);
                for plane in 0..n * c {
                    let base = plane * h * w;
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut best = base + oy * size * w + ox * size;
                            for dy in 0..size {
                                for dx in 0..size {
                                    let idx = base + (oy * size + dy) * w + ox * size + dx;
                                    if x[idx] > x[best] {
                                        best = idx;
                                    }
                                }
                            }
                            out.push(x[best]);
                            argmax.push(best);
                        }
                    }
                }
                let cache = LayerCache::MaxPool2d {
                    input_shape: input.shape().to_vec(),
                    argmax,
                };
                Ok((Tensor::new(out_shape, out)?, cache))
            }
            LayerKind::L2Norm => {
                let mut out = input.clone();
                let mut norms = Vec::with_capacity(input.rows());
                for i in 0..input.rows() {
                    let row = out.row_mut(i);
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if !(norm >= L2NORM_MIN_NORM) {
                        return Err(Error::NumericalUnderflow { row: i, norm });
                    }
                    row.iter_mut().for_each(|v| *v /= norm);
                    norms.push(norm);
                }
                let cache = LayerCache::L2Norm {
                    output: out.clone(),
                    norms,
                };
                Ok((out, cache))
            }
        }
    }

    /// Gradients of `⟨upstream, output⟩` with respect to the input and to
    /// every parameter. When `need_input_grad` is false the returned input
    /// gradient is an empty placeholder.
    pub fn backward(
        &self,
        params: &[Tensor],
        cache: &LayerCache,
        upstream: &Tensor,
        need_input_grad: bool,
    ) -> Result<(Tensor, Vec<Tensor>)> {
        self.check_params(params)?;
        match (self, cache) {
            (&LayerKind::Affine { inputs, outputs }, LayerCache::Affine { input }) => {
                let n = input.rows();
                expect_shape(upstream, &[n, outputs])?;
                let dy = upstream.data();
                let mut dw = vec![0.0; inputs * outputs];
                gemm_tn(inputs, n, outputs, input.data(), dy, &mut dw);
                let mut db = vec![0.0; outputs];
                for row in dy.chunks(outputs) {
                    db.iter_mut().zip(row).for_each(|(b, g)| *b += g);
                }
                let dx = if need_input_grad {
                    let mut dx = vec![0.0; n * inputs];
                    gemm_nt(n, outputs, inputs, dy, params[0].data(), &mut dx);
                    Tensor::new(input.shape().to_vec(), dx)?
                } else {
                    Tensor::scalar(0.0)
                };
                Ok((
                    dx,
                    vec![
                        Tensor::matrix(inputs, outputs, dw)?,
                        Tensor::vector(db)?,
                    ],
                ))
            }
            (LayerKind::Relu, LayerCache::Relu { input }) => {
                expect_shape(upstream, input.shape())?;
                let dx = input
                    .data()
                    .iter()
                    .zip(upstream.data())
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                Ok((Tensor::new(input.shape().to_vec(), dx)?, vec![]))
            }
            (
                &LayerKind::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    padding,
                },
                LayerCache::Conv2d { input_shape, cols },
            ) => {
                let out_shape = self.output_shape(input_shape)?;
                expect_shape(upstream, &out_shape)?;
                let [n, _, h, w] = dims4(input_shape)?;
                let (ho, wo) = (out_shape[2], out_shape[3]);
                let patch = in_channels * kernel * kernel;
                let spatial = ho * wo;
                let geo = ConvGeometry {
                    channels: in_channels,
                    h,
                    w,
                    kernel,
                    padding,
                    ho,
                    wo,
                };
                let mut dk = vec![0.0; out_channels * patch];
                let mut db = vec![0.0; out_channels];
                let mut dx = if need_input_grad {
                    vec![0.0; n * in_channels * h * w]
                } else {
                    Vec::new()
                };
                let mut dcol = vec![0.0; patch * spatial];
                for s in 0..n {
                    let g = &upstream.data()[s * out_channels * spatial..(s + 1) * out_channels * spatial];
                    let col = &cols[s * patch * spatial..(s + 1) * patch * spatial];
                    gemm_nt(out_channels, spatial, patch, g, col, &mut dk);
                    for (oc, chunk) in g.chunks(spatial).enumerate() {
                        db[oc] += chunk.iter().sum::<f64>();
                    }
                    if need_input_grad {
                        dcol.fill(0.0);
                        gemm_tn(patch, out_channels, spatial, params[0].data(), g, &mut dcol);
                        let img = &mut dx[s * in_channels * h * w..(s + 1) * in_channels * h * w];
                        geo.col2im(&dcol, img);
                    }
                }
                let dx = if need_input_grad {
                    Tensor::new(input_shape.clone(), dx)?
                } else {
                    Tensor::scalar(0.0)
                };
                Ok((
                    dx,
                    vec![
                        Tensor::new(vec![out_channels, in_channels, kernel, kernel], dk)?,
                        Tensor::vector(db)?,
                    ],
                ))
            }
            (LayerKind::MaxPool2d { .. }, LayerCache::MaxPool2d { input_shape, argmax }) => {
                let out_shape = self.output_shape(input_shape)?;
                expect_shape(upstream, &out_shape)?;
                let mut dx = vec![0.0; input_shape.iter().product()];
                for (&src, &g) in argmax.iter().zip(upstream.data()) {
                    dx[src] += g;
                }
                Ok((Tensor::new(input_shape.clone(), dx)?, vec![]))
            }
            (LayerKind::L2Norm, LayerCache::L2Norm { output, norms }) => {
                expect_shape(upstream, output.shape())?;
                let mut dx = upstream.clone();
                for (i, &norm) in norms.iter().enumerate() {
                    let y = output.row(i);
                    let g = dx.row_mut(i);
                    let dot: f64 = y.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
                    g.iter_mut()
                        .zip(y)
                        .for_each(|(gv, &yv)| *gv = (*gv - yv * dot) / norm);
                }
                Ok((dx, vec![]))
            }
            _ => Err(Error::ShapeMismatch(format!(
                "cache does not belong to layer {self:?}"
            ))),
        }
    }
}

/// Forward then backward through a single layer:
/// `(output, input_grad, param_grads)`.
pub fn layer_forward_backward(
    kind: &LayerKind,
    params: &[Tensor],
    input: &Tensor,
    upstream_grad: &Tensor,
) -> Result<(Tensor, Tensor, Vec<Tensor>)> {
    let (out, cache) = kind.forward(params, input)?;
    let (dx, dp) = kind.backward(params, &cache, upstream_grad, true)?;
    Ok((out, dx, dp))
}

struct ConvGeometry {
    channels: usize,
    h: usize,
    w: usize,
    kernel: usize,
    padding: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeometry {
    /// Unfolds one `C × H × W` image into a `(C·k·k) × (Ho·Wo)` patch matrix.
    fn im2col(&self, img: &[f64], col: &mut [f64]) {
        let spatial = self.ho * self.wo;
        let k = self.kernel;
        for c in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut col[row * spatial..(row + 1) * spatial];
                    for oy in 0..self.ho {
                        let iy = (oy + ky) as isize - self.padding as isize;
                        for ox in 0..self.wo {
                            let ix = (ox + kx) as isize - self.padding as isize;
                            dst[oy * self.wo + ox] = if iy >= 0
                                && ix >= 0
                                && (iy as usize) < self.h
                                && (ix as usize) < self.w
                            {
                                img[(c * self.h + iy as usize) * self.w + ix as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatters patch gradients back onto the image.
    fn col2im(&self, col: &[f64], img: &mut [f64]) {
        let spatial = self.ho * self.wo;
        let k = self.kernel;
        for c in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &col[row * spatial..(row + 1) * spatial];
                    for oy in 0..self.ho {
                        let iy = (oy + ky) as isize - self.padding as isize;
                        if iy < 0 || iy as usize >= self.h {
                            continue;
                        }
                        for ox in 0..self.wo {
                            let ix = (ox + kx) as isize - self.padding as isize;
                            if ix < 0 || ix as usize >= self.w {
                                continue;
                            }
                            img[(c * self.h + iy as usize) * self.w + ix as usize] +=
                                src[oy * self.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn dims4(shape: &[usize]) -> Result<[usize; 4]> {
    match *shape {
        [n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(Error::ShapeMismatch(format!(
            "expected N×C×H×W, got {shape:?}"
        ))),
    }
}

fn expect_shape(t: &Tensor, shape: &[usize]) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::ShapeMismatch(format!(
            "gradient shape {:?}, expected {shape:?}",
            t.shape()
        )));
    }
    Ok(())
}
