//! Dirichlet label-skew partitioning of a dataset across clients.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub n_clients: usize,
    pub dirichlet_alpha: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::Partition("n_clients must be at least 1".into()));
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return Err(Error::Partition(format!(
                "dirichlet_alpha must be positive, got {}",
                self.dirichlet_alpha
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Partition(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

/// One client's local data, as indices into the parent dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientShard {
    pub client_id: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl ClientShard {
    pub fn len(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub shards: Vec<ClientShard>,
    /// Clients that received no example at all.
    pub empty_clients: Vec<usize>,
    pub warnings: Vec<String>,
}

impl Partition {
    /// `counts[client][class]` over train and test indices together.
    pub fn class_histogram(&self, labels: &[usize], num_classes: usize) -> Vec<Vec<usize>> {
        self.shards
            .iter()
            .map(|s| {
                let mut row = vec![0; num_classes];
                for &i in s.train.iter().chain(&s.test) {
                    row[labels[i]] += 1;
                }
                row
            })
            .collect()
    }
}

/// Draws `p ~ Dirichlet(alpha * 1_n)` by normalizing independent
/// `Gamma(alpha, 1)` variates.
pub(crate) fn dirichlet_sample<R: rand::Rng>(alpha: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.into_iter().map(|g| g / sum).collect()
    } else {
        // every variate underflowed; all mass on the largest draw
        let best = draws
            .iter()
            .enumerate()
            .fold(0, |b, (i, &g)| if g > draws[b] { i } else { b });
        (0..n).map(|i| if i == best { 1.0 } else { 0.0 }).collect()
    }
}

/// Integer counts summing to `total` that follow `proportions`: floor
/// every share, then hand the leftover units to the largest fractional
/// parts (lower client id first on ties).
pub(crate) fn largest_remainder(proportions: &[f64], total: usize) -> Vec<usize> {
    let exact: Vec<f64> = proportions.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Splits example indices across `spec.n_clients` clients with per-class
/// Dirichlet proportions, then splits each client's examples into train and
/// test by a seeded shuffle.
pub fn dirichlet_partition(
    labels: &[usize],
    num_classes: usize,
    spec: &PartitionSpec,
) -> Result<Partition> {
    spec.validate()?;
    if labels.is_empty() {
        return Err(Error::Partition("no labels to partition".into()));
    }
    let n = spec.n_clients;
    let mut warnings = Vec::new();
    if n > labels.len() {
        warnings.push(format!(
            "{n} clients but only {} examples; some clients will be empty",
            labels.len()
        ));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::Partition(format!(
                "label {l} at index {i} outside [0, {num_classes})"
            )));
        }
        by_class[l].push(i);
    }

    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let mut rng = rng::stream(spec.seed, Purpose::Partition, class as u64, 0);
        members.shuffle(&mut rng);
        let p = dirichlet_sample(spec.dirichlet_alpha, n, &mut rng);
        let counts = largest_remainder(&p, members.len());
        let mut start = 0;
        for (client, &count) in counts.iter().enumerate() {
            owned[client].extend_from_slice(&members[start..start + count]);
            start += count;
        }
    }

    let mut shards = Vec::with_capacity(n);
    let mut empty_clients = Vec::new();
    for (client_id, mut idx) in owned.into_iter().enumerate() {
        if idx.is_empty() {
            empty_clients.push(client_id);
        }
        idx.sort_unstable();
        let mut rng = rng::stream(spec.seed, Purpose::Split, client_id as u64, 0);
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * spec.test_fraction).floor() as usize;
        let train = idx.split_off(n_test);
        shards.push(ClientShard {
            client_id,
            train,
            test: idx,
        });
    }
    if !empty_clients.is_empty() {
        warnings.push(format!("clients without any example: {empty_clients:?}"));
    }
    Ok(Partition {
        shards,
        empty_clients,
        warnings,
    })
}

/// Mean over non-empty clients of the Shannon entropy (nats) of the
/// per-client class distribution.
pub fn mean_label_entropy(histogram: &[Vec<usize>]) -> f64 {
    let entropies: Vec<f64> = histogram
        .iter()
        .filter_map(|row| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| {
                row.iter()
                    .filter(|&&c| c > 0)
                    .map(|&c| {
                        let p = c as f64 / total as f64;
                        -p * p.ln()
                    })
                    .sum::<f64>()
            })
        })
        .collect();
    if entropies.is_empty() {
        0.0
    } else {
        entropies.iter().sum::<f64>() / entropies.len() as f64
    }
}
