//! Client-side work: local rounds, fine-tuning and evaluation.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{ClientShard, Dataset};
use crate::nn::{
    argmax_rows, forward_raw, loss_and_grad_raw, sgd_step_in_place, FreezeMask, ModelArch, ParamSet,
};
use crate::rng::{self, Purpose};
use crate::schedule::Mode;

/// What a participant sends back after a round.
#[derive(Debug, Clone)]
pub struct LocalUpdate {
    pub client_id: usize,
    pub n_train: usize,
    /// Full local model; only the communicated layers are read by the server.
    pub params: ParamSet,
    pub mean_loss: f64,
    pub samples_processed: u64,
}

/// Gradient-computation and update masks for a round. They differ only
/// under FedBABU, where the head gradient is computed but applied with
/// learning rate zero.
pub fn local_masks(mode: Mode, round_mask: &FreezeMask) -> (FreezeMask, FreezeMask) {
    match mode {
        Mode::FedBabu => (round_mask.clone().with_head(true), round_mask.clone()),
        _ => (round_mask.clone(), round_mask.clone()),
    }
}

/// Mini-batch SGD over `indices` for `epochs` passes, reshuffling each pass.
/// Returns the sample-weighted mean training loss and samples processed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn train_epochs(
    arch: &ModelArch,
    data: &Dataset,
    indices: &[usize],
    params: &mut ParamSet,
    compute_mask: &FreezeMask,
    apply_mask: &FreezeMask,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> (f64, u64) {
    let mut order = indices.to_vec();
    let mut buf = Vec::new();
    let mut labels = Vec::new();
    let mut loss_sum = 0.0;
    let mut seen = 0u64;
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            data.gather(chunk, &mut buf, &mut labels);
            let (loss, grads) = loss_and_grad_raw(arch, params, &buf, &labels, compute_mask);
            sgd_step_in_place(params, &grads, lr, apply_mask);
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len() as u64;
        }
    }
    let mean = if seen > 0 {
        loss_sum / seen as f64
    } else {
        0.0
    };
    (mean, seen)
}

/// One participant's round: start from the global model (base plus the
/// fixed initial head), train the layers of `round_mask` on the local
/// train split, return the result. `None` for a client without training
/// data.
#[allow(clippy::too_many_arguments)]
pub fn local_update(
    arch: &ModelArch,
    data: &Dataset,
    shard: &ClientShard,
    global: &ParamSet,
    round_mask: &FreezeMask,
    mode: Mode,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
    round: u64,
) -> Option<LocalUpdate> {
    if shard.train.is_empty() {
        return None;
    }
    let (compute_mask, apply_mask) = local_masks(mode, round_mask);
    let mut params = global.clone();
    let mut rng = rng::stream(seed, Purpose::LocalTrain, shard.client_id as u64, round);
    let (mean_loss, samples_processed) = train_epochs(
        arch,
        data,
        &shard.train,
        &mut params,
        &compute_mask,
        &apply_mask,
        epochs,
        batch_size,
        lr,
        &mut rng,
    );
    Some(LocalUpdate {
        client_id: shard.client_id,
        n_train: shard.train.len(),
        params,
        mean_loss,
        samples_processed,
    })
}

/// Number of correct predictions over `indices`, evaluated in chunks.
pub fn count_correct(
    arch: &ModelArch,
    params: &ParamSet,
    data: &Dataset,
    indices: &[usize],
) -> usize {
    let mut buf = Vec::new();
    let mut labels = Vec::new();
    let mut correct = 0;
    for chunk in indices.chunks(128) {
        data.gather(chunk, &mut buf, &mut labels);
        let trace = forward_raw(arch, params, &buf, chunk.len(), false);
        correct += argmax_rows(trace.logits(), arch.num_classes())
            .zip(&labels)
            .filter(|(p, l)| p == *l)
            .count();
    }
    correct
}

pub fn accuracy(
    arch: &ModelArch,
    params: &ParamSet,
    data: &Dataset,
    indices: &[usize],
) -> Option<f64> {
    (!indices.is_empty())
        .then(|| count_correct(arch, params, data, indices) as f64 / indices.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientResult {
    pub client_id: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// `None` when the client has no test data.
    pub accuracy: Option<f64>,
}

/// Personalization: every layer trains for `epochs` passes over the local
/// train split, starting from the final global model; then the local test
/// split is scored.
#[allow(clippy::too_many_arguments)]
pub fn fine_tune(
    arch: &ModelArch,
    data: &Dataset,
    shard: &ClientShard,
    global: &ParamSet,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
) -> (ParamSet, ClientResult) {
    let mut params = global.clone();
    if epochs > 0 && !shard.train.is_empty() {
        let all = FreezeMask::all_trainable(arch.num_trainable());
        let mut rng = rng::stream(seed, Purpose::FineTune, shard.client_id as u64, 0);
        train_epochs(
            arch,
            data,
            &shard.train,
            &mut params,
            &all,
            &all,
            epochs,
            batch_size,
            lr,
            &mut rng,
        );
    }
    let result = ClientResult {
        client_id: shard.client_id,
        n_train: shard.train.len(),
        n_test: shard.test.len(),
        accuracy: accuracy(arch, &params, data, &shard.test),
    };
    (params, result)
}
