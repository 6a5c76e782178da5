//! Central finite-difference check of the analytic gradients.

use rand::Rng;
use serde::Serialize;

use super::arch::{Layer, ModelArch, Shape};
use super::engine::{forward_raw, loss_and_grad, softmax_cross_entropy, Trace};
use super::params::{FreezeMask, ParamSet};
use crate::error::Result;
use crate::rng::{self, Purpose};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const DEFAULT_SAMPLES: usize = 200;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    pub sampled: usize,
    /// Draws discarded because the perturbation crossed a ReLU or max-pool kink.
    pub skipped_kinks: usize,
    /// No trainable parameter exists under the mask; the check holds trivially.
    pub vacuous: bool,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.vacuous || self.max_rel_error <= tol
    }
}

/// A batch of `batch` inputs uniform in `[0, 1)` with uniform random
/// labels, for gradient checks.
pub fn random_batch(arch: &ModelArch, batch: usize, seed: u64) -> Result<(Tensor, Vec<usize>)> {
    let mut rng = rng::stream(seed, Purpose::GradCheck, 1, 0);
    let mut shape = vec![batch];
    match arch.input() {
        Shape::Image { c, h, w } => shape.extend([c, h, w]),
        Shape::Flat(n) => shape.push(n),
    }
    let len = batch * arch.input().size();
    let values = (0..len).map(|_| rng.random::<f64>()).collect();
    let labels = (0..batch)
        .map(|_| rng.random_range(0..arch.num_classes()))
        .collect();
    Ok((Tensor::new(shape, values)?, labels))
}

/// ReLU sign pattern and pooling winners; a change between perturbed
/// evaluations means the loss is not smooth over the step.
fn pattern(arch: &ModelArch, trace: &Trace) -> Vec<u64> {
    let mut bits = Vec::new();
    for (i, layer) in arch.layers().iter().enumerate() {
        match layer {
            Layer::Relu => {
                for chunk in trace.acts[i].chunks(64) {
                    let mut word = 0u64;
                    for (j, v) in chunk.iter().enumerate() {
                        if *v > 0.0 {
                            word |= 1 << j;
                        }
                    }
                    bits.push(word);
                }
            }
            Layer::MaxPool2 => {
                if let Some(idx) = &trace.argmax[i] {
                    bits.extend(idx.iter().map(|&v| v as u64));
                }
            }
            _ => {}
        }
    }
    bits
}

fn eval(arch: &ModelArch, params: &ParamSet, input: &[f64], labels: &[usize]) -> (f64, Vec<u64>) {
    let trace = forward_raw(arch, params, input, labels.len(), true);
    let loss = softmax_cross_entropy(trace.logits(), labels, arch.num_classes()).0;
    (loss, pattern(arch, &trace))
}

/// Compares analytic gradients against central differences (step
/// [`FD_STEP`]) on `samples` randomly chosen trainable parameters.
pub fn finite_diff_check(
    arch: &ModelArch,
    params: &ParamSet,
    batch: &Tensor,
    labels: &[usize],
    mask: &FreezeMask,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, grads) = loss_and_grad(arch, params, batch, labels, mask)?;
    let input = batch.values();

    let candidates: Vec<usize> = {
        let mut out = Vec::new();
        let mut offset = 0;
        for (l, p) in params.layers().iter().enumerate() {
            if mask.is_trainable(l) {
                out.push((offset, p.len()));
            }
            offset += p.len();
        }
        out.into_iter().flat_map(|(o, n)| o..o + n).collect()
    };
    if candidates.is_empty() {
        return Ok(GradCheckReport {
            max_rel_error: 0.0,
            sampled: 0,
            skipped_kinks: 0,
            vacuous: true,
        });
    }

    let (_, base_pattern) = eval(arch, params, input, labels);
    let mut rng = rng::stream(seed, Purpose::GradCheck, 0, 0);
    let mut work = params.clone();
    let mut max_rel: f64 = 0.0;
    let (mut sampled, mut skipped) = (0, 0);
    let max_draws = samples * 20;
    let mut draws = 0;
    while sampled < samples && draws < max_draws {
        draws += 1;
        let n = candidates[rng.random_range(0..candidates.len())];
        let orig = work.get_flat(n);
        work.set_flat(n, orig + FD_STEP);
        let (plus, p_plus) = eval(arch, &work, input, labels);
        work.set_flat(n, orig - FD_STEP);
        let (minus, p_minus) = eval(arch, &work, input, labels);
        work.set_flat(n, orig);
        if p_plus != base_pattern || p_minus != base_pattern {
            skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let analytic = grads.get_flat(n);
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max((analytic - numeric).abs() / denom);
        sampled += 1;
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        sampled,
        skipped_kinks: skipped,
        vacuous: false,
    })
}
