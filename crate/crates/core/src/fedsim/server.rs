//! Server-side work: client sampling and weighted aggregation.

use rand::seq::index;

use super::client::LocalUpdate;
use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::rng::{self, Purpose};

/// `floor(r * n)` distinct client ids drawn uniformly without replacement,
/// returned in ascending order. Deterministic in `(seed, round)`.
pub fn sample_clients(
    n_clients: usize,
    join_ratio: f64,
    seed: u64,
    round: u64,
) -> Result<Vec<usize>> {
    let m = (join_ratio * n_clients as f64 + 1e-9).floor() as usize;
    if m == 0 || m > n_clients {
        return Err(Error::Config(format!(
            "join_ratio {join_ratio} with {n_clients} clients selects {m} clients per round"
        )));
    }
    let mut rng = rng::stream(seed, Purpose::Sampling, round, 0);
    let mut ids = index::sample(&mut rng, n_clients, m).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// Aggregation weights `|D_i| / sum_j |D_j|` over the round's participants,
/// in the order given.
pub fn aggregation_weights(sizes: &[usize]) -> Result<Vec<f64>> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::Aggregation(
            "all participating shards are empty".into(),
        ));
    }
    Ok(sizes.iter().map(|&n| n as f64 / total as f64).collect())
}

/// Replaces every layer flagged in `layers` by the data-size weighted mean
/// of the participants' versions; other layers are carried over from
/// `global` untouched. Summation runs in ascending client id order.
pub fn aggregate(global: &ParamSet, updates: &[LocalUpdate], layers: &[bool]) -> Result<ParamSet> {
    if updates.is_empty() {
        return Err(Error::Aggregation("no client updates to aggregate".into()));
    }
    assert_eq!(layers.len(), global.num_layers(), "layer flag length");
    let mut ordered: Vec<&LocalUpdate> = updates.iter().collect();
    ordered.sort_by_key(|u| u.client_id);
    for u in &ordered {
        if u.params.num_layers() != global.num_layers() {
            return Err(Error::Aggregation(format!(
                "client {} sent {} layers, expected {}",
                u.client_id,
                u.params.num_layers(),
                global.num_layers()
            )));
        }
    }
    let sizes: Vec<usize> = ordered.iter().map(|u| u.n_train).collect();
    let weights = aggregation_weights(&sizes)?;

    let mut out = global.clone();
    for (l, _) in layers.iter().enumerate().filter(|(_, &f)| f) {
        let target = out.layer_mut(l);
        target.weight.fill(0.0);
        target.bias.fill(0.0);
        for (u, &w) in ordered.iter().zip(&weights) {
            let src = u.params.layer(l);
            if src.weight.shape() != target.weight.shape()
                || src.bias.shape() != target.bias.shape()
            {
                return Err(Error::Aggregation(format!(
                    "client {} layer {} has mismatched shape",
                    u.client_id, src.name
                )));
            }
            for (acc, v) in target
                .weight
                .values_mut()
                .iter_mut()
                .zip(src.weight.values())
            {
                *acc += w * v;
            }
            for (acc, v) in target.bias.values_mut().iter_mut().zip(src.bias.values()) {
                *acc += w * v;
            }
        }
    }
    Ok(out)
}
