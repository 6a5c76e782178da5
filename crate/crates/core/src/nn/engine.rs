//! Forward pass, softmax cross-entropy and exact backpropagation.

use super::arch::{Layer, ModelArch, Shape};
use super::gemm::{gemm, View};
use super::params::{FreezeMask, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Everything the backward pass needs from the forward pass.
pub(crate) struct Trace {
    /// `acts[i]` is the batched input of layer `i`; the last entry holds logits.
    pub acts: Vec<Vec<f64>>,
    /// im2col buffers of conv layers, one `(C*k*k) x P` block per sample.
    pub cols: Vec<Option<Vec<f64>>>,
    /// Flat input offset of the winning element of each pooling window.
    pub argmax: Vec<Option<Vec<u32>>>,
    pub batch: usize,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        self.acts.last().expect("logits")
    }
}

fn check_batch(arch: &ModelArch, batch: &Tensor) -> Result<usize> {
    let shape = batch.shape();
    let ok = match arch.input() {
        Shape::Image { c, h, w } => shape.len() == 4 && shape[1..] == [c, h, w],
        Shape::Flat(n) => shape.len() == 2 && shape[1] == n,
    };
    if !ok {
        return Err(Error::Shape {
            layer: arch.layer_name(0).to_string(),
            detail: format!(
                "batch has shape {shape:?}, expected (B, {}) input",
                match arch.input() {
                    Shape::Image { c, h, w } => format!("{c}, {h}, {w}"),
                    Shape::Flat(n) => n.to_string(),
                }
            ),
        });
    }
    Ok(shape[0])
}

fn check_labels(arch: &ModelArch, labels: &[usize], batch: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::Shape {
            layer: "loss".into(),
            detail: format!("{} labels for a batch of {batch}", labels.len()),
        });
    }
    let num_classes = arch.num_classes();
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
        return Err(Error::InvalidLabel {
            label,
            index,
            num_classes,
        });
    }
    Ok(())
}

fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize, col: &mut [f64]) {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let p = oh * ow;
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let src = &x[ci * h * w + (oy + ki) * w + kj..][..ow];
                    dst[oy * ow..(oy + 1) * ow].copy_from_slice(src);
                }
            }
        }
    }
}

fn col2im_add(dcol: &[f64], c: usize, h: usize, w: usize, k: usize, dx: &mut [f64]) {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let p = oh * ow;
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &dcol[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let dst = &mut dx[ci * h * w + (oy + ki) * w + kj..][..ow];
                    for (d, s) in dst.iter_mut().zip(&src[oy * ow..(oy + 1) * ow]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Runs the network on `b` samples laid out contiguously in `input`.
/// With `keep == false` only the logits are retained.
pub(crate) fn forward_raw(
    arch: &ModelArch,
    params: &ParamSet,
    input: &[f64],
    b: usize,
    keep: bool,
) -> Trace {
    let n_layers = arch.layers().len();
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
    let mut cols = Vec::with_capacity(n_layers);
    let mut argmax = Vec::with_capacity(n_layers);
    let mut cur = input.to_vec();
    let mut slot = 0;
    for (i, layer) in arch.layers().iter().enumerate() {
        let in_shape = arch.shape_at(i);
        let out_size = arch.shape_at(i + 1).size();
        let in_size = in_shape.size();
        let mut out = vec![0.0; b * out_size];
        let mut layer_cols = None;
        let mut layer_argmax = None;
        match (*layer, in_shape) {
            (
                Layer::Conv2d {
                    out_channels,
                    kernel,
                    ..
                },
                Shape::Image { c, h, w },
            ) => {
                let p = (h - kernel + 1) * (w - kernel + 1);
                let ckk = c * kernel * kernel;
                let lp = params.layer(slot);
                let mut all_cols = vec![0.0; b * ckk * p];
                for s in 0..b {
                    let col = &mut all_cols[s * ckk * p..(s + 1) * ckk * p];
                    im2col(&cur[s * in_size..(s + 1) * in_size], c, h, w, kernel, col);
                    let y = &mut out[s * out_size..(s + 1) * out_size];
                    for (o, bias) in lp.bias.values().iter().enumerate() {
                        y[o * p..(o + 1) * p].fill(*bias);
                    }
                    gemm(
                        View::row_major(lp.weight.values(), out_channels, ckk),
                        View::row_major(col, ckk, p),
                        1.0,
                        y,
                    );
                }
                if keep {
                    layer_cols = Some(all_cols);
                }
                slot += 1;
            }
            (Layer::Dense { inputs, outputs }, _) => {
                let lp = params.layer(slot);
                for row in out.chunks_exact_mut(outputs) {
                    row.copy_from_slice(lp.bias.values());
                }
                gemm(
                    View::row_major(&cur, b, inputs),
                    View::transposed(lp.weight.values(), outputs, inputs),
                    1.0,
                    &mut out,
                );
                slot += 1;
            }
            (Layer::Relu, _) => {
                for (o, x) in out.iter_mut().zip(&cur) {
                    *o = if *x > 0.0 { *x } else { 0.0 };
                }
            }
            (Layer::MaxPool2, Shape::Image { c, h, w }) => {
                let (oh, ow) = (h / 2, w / 2);
                let mut idx = vec![0u32; b * out_size];
                for s in 0..b {
                    let x = &cur[s * in_size..(s + 1) * in_size];
                    for ci in 0..c {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let base = ci * h * w + 2 * oy * w + 2 * ox;
                                // first maximum wins ties
                                let mut best = base;
                                for cand in [base + 1, base + w, base + w + 1] {
                                    if x[cand] > x[best] {
                                        best = cand;
                                    }
                                }
                                let o = s * out_size + (ci * oh + oy) * ow + ox;
                                out[o] = x[best];
                                idx[o] = best as u32;
                            }
                        }
                    }
                }
                if keep {
                    layer_argmax = Some(idx);
                }
            }
            (Layer::Flatten, _) => out.copy_from_slice(&cur),
            _ => unreachable!("architecture validated at construction"),
        }
        if keep {
            acts.push(std::mem::replace(&mut cur, out));
        } else {
            cur = out;
        }
        cols.push(layer_cols);
        argmax.push(layer_argmax);
    }
    acts.push(cur);
    Trace {
        acts,
        cols,
        argmax,
        batch: b,
    }
}

/// Logits `(B, num_classes)` for a batch `(B, C, H, W)` (or `(B, n)` for flat input).
pub fn forward(arch: &ModelArch, params: &ParamSet, batch: &Tensor) -> Result<Tensor> {
    params.check_matches(arch)?;
    let b = check_batch(arch, batch)?;
    let trace = forward_raw(arch, params, batch.values(), b, false);
    Tensor::new(
        vec![b, arch.num_classes()],
        trace.acts.into_iter().last().expect("logits"),
    )
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub(crate) fn softmax_cross_entropy(
    logits: &[f64],
    labels: &[usize],
    classes: usize,
) -> (f64, Vec<f64>) {
    let b = labels.len();
    let mut grad = vec![0.0; logits.len()];
    let mut total = 0.0;
    for (s, &y) in labels.iter().enumerate() {
        let z = &logits[s * classes..(s + 1) * classes];
        let g = &mut grad[s * classes..(s + 1) * classes];
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (gi, zi) in g.iter_mut().zip(z) {
            *gi = (zi - m).exp();
            sum += *gi;
        }
        total += m + sum.ln() - z[y];
        for gi in g.iter_mut() {
            *gi /= sum * b as f64;
        }
        g[y] -= 1.0 / b as f64;
    }
    (total / b as f64, grad)
}

/// Backward pass. Gradients are produced only for layers flagged in `mask`;
/// other entries stay zero and no arithmetic is spent on them. Upstream
/// gradients are propagated through frozen layers only as far as the first
/// trainable layer.
pub(crate) fn backward(
    arch: &ModelArch,
    params: &ParamSet,
    trace: &Trace,
    dlogits: Vec<f64>,
    mask: &FreezeMask,
) -> ParamSet {
    let mut grads = ParamSet::zeros(arch);
    let trainable = arch.trainable_indices();
    let Some(first) = trainable
        .iter()
        .zip(mask.flags())
        .find(|(_, &f)| f)
        .map(|(&i, _)| i)
    else {
        return grads;
    };
    let b = trace.batch;
    let mut dy = dlogits;
    let mut slot = arch.num_trainable();
    for i in (first..arch.layers().len()).rev() {
        let layer = arch.layers()[i];
        let in_shape = arch.shape_at(i);
        let in_size = in_shape.size();
        let out_size = arch.shape_at(i + 1).size();
        let x = &trace.acts[i];
        let need_dx = i > first;
        let mut dx = if need_dx {
            vec![0.0; b * in_size]
        } else {
            Vec::new()
        };
        match (layer, in_shape) {
            (
                Layer::Conv2d {
                    out_channels,
                    kernel,
                    ..
                },
                Shape::Image { c, h, w },
            ) => {
                slot -= 1;
                let p = (h - kernel + 1) * (w - kernel + 1);
                let ckk = c * kernel * kernel;
                let cols = trace.cols[i].as_ref().expect("forward kept im2col");
                let weight = params.layer(slot).weight.values();
                let train = mask.is_trainable(slot);
                let mut dcol = if need_dx {
                    vec![0.0; ckk * p]
                } else {
                    Vec::new()
                };
                for s in 0..b {
                    let dys = &dy[s * out_size..(s + 1) * out_size];
                    if train {
                        let g = grads.layer_mut(slot);
                        gemm(
                            View::row_major(dys, out_channels, p),
                            View::transposed(&cols[s * ckk * p..(s + 1) * ckk * p], ckk, p),
                            1.0,
                            g.weight.values_mut(),
                        );
                        for (o, db) in g.bias.values_mut().iter_mut().enumerate() {
                            *db += dys[o * p..(o + 1) * p].iter().sum::<f64>();
                        }
                    }
                    if need_dx {
                        gemm(
                            View::transposed(weight, out_channels, ckk),
                            View::row_major(dys, out_channels, p),
                            0.0,
                            &mut dcol,
                        );
                        col2im_add(
                            &dcol,
                            c,
                            h,
                            w,
                            kernel,
                            &mut dx[s * in_size..(s + 1) * in_size],
                        );
                    }
                }
            }
            (Layer::Dense { inputs, outputs }, _) => {
                slot -= 1;
                if mask.is_trainable(slot) {
                    let g = grads.layer_mut(slot);
                    gemm(
                        View::transposed(&dy, b, outputs),
                        View::row_major(x, b, inputs),
                        0.0,
                        g.weight.values_mut(),
                    );
                    for row in dy.chunks_exact(outputs) {
                        for (db, d) in g.bias.values_mut().iter_mut().zip(row) {
                            *db += d;
                        }
                    }
                }
                if need_dx {
                    gemm(
                        View::row_major(&dy, b, outputs),
                        View::row_major(params.layer(slot).weight.values(), outputs, inputs),
                        0.0,
                        &mut dx,
                    );
                }
            }
            (Layer::Relu, _) => {
                if need_dx {
                    for ((d, g), xi) in dx.iter_mut().zip(&dy).zip(x) {
                        // derivative at exactly zero is taken as zero
                        if *xi > 0.0 {
                            *d = *g;
                        }
                    }
                }
            }
            (Layer::MaxPool2, _) => {
                if need_dx {
                    let idx = trace.argmax[i].as_ref().expect("forward kept argmax");
                    for s in 0..b {
                        let dxs = &mut dx[s * in_size..(s + 1) * in_size];
                        for o in 0..out_size {
                            dxs[idx[s * out_size + o] as usize] += dy[s * out_size + o];
                        }
                    }
                }
            }
            (Layer::Flatten, _) => {
                if need_dx {
                    dx = std::mem::take(&mut dy);
                }
            }
            _ => unreachable!("architecture validated at construction"),
        }
        dy = dx;
    }
    grads
}

pub(crate) fn loss_and_grad_raw(
    arch: &ModelArch,
    params: &ParamSet,
    input: &[f64],
    labels: &[usize],
    mask: &FreezeMask,
) -> (f64, ParamSet) {
    let trace = forward_raw(arch, params, input, labels.len(), true);
    let (loss, dlogits) = softmax_cross_entropy(trace.logits(), labels, arch.num_classes());
    let grads = backward(arch, params, &trace, dlogits, mask);
    (loss, grads)
}

/// Mean cross-entropy over the batch and its gradient restricted to the
/// trainable layers of `mask`.
pub fn loss_and_grad(
    arch: &ModelArch,
    params: &ParamSet,
    batch: &Tensor,
    labels: &[usize],
    mask: &FreezeMask,
) -> Result<(f64, ParamSet)> {
    params.check_matches(arch)?;
    mask.check_len(arch.num_trainable())?;
    let b = check_batch(arch, batch)?;
    check_labels(arch, labels, b)?;
    Ok(loss_and_grad_raw(
        arch,
        params,
        batch.values(),
        labels,
        mask,
    ))
}

pub(crate) fn argmax_rows(logits: &[f64], classes: usize) -> impl Iterator<Item = usize> + '_ {
    logits.chunks_exact(classes).map(|row| {
        row.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            })
            .0
    })
}

/// Predicted class per sample; ties go to the lowest class index.
pub fn predict(arch: &ModelArch, params: &ParamSet, batch: &Tensor) -> Result<Vec<usize>> {
    let logits = forward(arch, params, batch)?;
    Ok(argmax_rows(logits.values(), arch.num_classes()).collect())
}
