use rayon::prelude::*;

use super::client::{accuracy, fine_tune, local_update, ClientResult, LocalUpdate};
use super::config::ExperimentConfig;
use super::server::{aggregate, sample_clients};
use crate::cost::{round_comm, round_flops};
use crate::data::{dirichlet_partition, ClientShard, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{RoundMetrics, RunSummary};
use crate::nn::{count_params, init_params, LayerParams, ModelArch, ParamCounts, ParamSet};
use crate::schedule::{trainable_mask, Mode};

/// Server-side model between rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    /// Number of completed rounds.
    pub round: u64,
    pub params: ParamSet,
    /// The head as initialized; every client starts from it.
    pub initial_head: LayerParams,
}

impl GlobalState {
    pub fn head_unchanged(&self) -> bool {
        self.params.head().bit_eq(&self.initial_head)
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub rounds: Vec<RoundMetrics>,
    pub clients: Vec<ClientResult>,
    pub summary: RunSummary,
    pub final_global: GlobalState,
}

/// A configured federation: model, dataset and client shards.
pub struct Federation<'a> {
    config: ExperimentConfig,
    arch: ModelArch,
    data: &'a Dataset,
    shards: Vec<ClientShard>,
    counts: ParamCounts,
    eval_indices: Vec<usize>,
    empty_clients: Vec<usize>,
    warnings: Vec<String>,
}

impl<'a> Federation<'a> {
    pub fn new(config: ExperimentConfig, data: &'a Dataset) -> Result<Self> {
        let mut warnings = config.validate()?;
        let arch = config.model.arch(data.num_classes());
        if data.image_shape() != (1, 28, 28) {
            return Err(Error::Config(format!(
                "dataset images are {:?}, the model expects (1, 28, 28)",
                data.image_shape()
            )));
        }
        let partition =
            dirichlet_partition(data.labels(), data.num_classes(), &config.partition_spec())?;
        warnings.extend(partition.warnings.iter().cloned());
        let mut eval_indices: Vec<usize> = partition
            .shards
            .iter()
            .flat_map(|s| s.test.iter().copied())
            .collect();
        eval_indices.sort_unstable();
        let counts = count_params(&arch);
        Ok(Self {
            config,
            arch,
            data,
            shards: partition.shards,
            counts,
            eval_indices,
            empty_clients: partition.empty_clients,
            warnings,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn arch(&self) -> &ModelArch {
        &self.arch
    }

    pub fn shards(&self) -> &[ClientShard] {
        &self.shards
    }

    pub fn counts(&self) -> &ParamCounts {
        &self.counts
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn init_global(&self) -> GlobalState {
        let params = init_params(&self.arch, self.config.seed);
        GlobalState {
            round: 0,
            initial_head: params.head().clone(),
            params,
        }
    }

    /// Accuracy of `params` on the union of all client test splits.
    pub fn global_accuracy(&self, params: &ParamSet) -> Option<f64> {
        accuracy(&self.arch, params, self.data, &self.eval_indices)
    }

    fn local(
        &self,
        client: usize,
        global: &GlobalState,
        mask: &crate::nn::FreezeMask,
    ) -> Option<LocalUpdate> {
        let c = &self.config;
        local_update(
            &self.arch,
            self.data,
            &self.shards[client],
            &global.params,
            mask,
            c.plan.mode,
            c.local_epochs,
            c.batch_size,
            c.learning_rate,
            c.seed,
            global.round,
        )
    }

    /// One federated round: sample, train locally under the round's mask,
    /// aggregate the trained layers.
    pub fn run_round(&self, global: &GlobalState) -> Result<(GlobalState, RoundMetrics)> {
        let c = &self.config;
        let t = global.round;
        if t >= c.total_rounds {
            return Err(Error::Config(format!(
                "round {t} requested but total_rounds is {}",
                c.total_rounds
            )));
        }
        let participants = sample_clients(c.n_clients, c.join_ratio, c.seed, t)?;
        let mask = trainable_mask(&c.plan, t, self.arch.base_layer_count());
        let results: Vec<Option<LocalUpdate>> = if c.parallel {
            participants
                .par_iter()
                .map(|&i| self.local(i, global, &mask))
                .collect()
        } else {
            participants
                .iter()
                .map(|&i| self.local(i, global, &mask))
                .collect()
        };
        let skipped: Vec<usize> = participants
            .iter()
            .zip(&results)
            .filter(|(_, r)| r.is_none())
            .map(|(&i, _)| i)
            .collect();
        let updates: Vec<LocalUpdate> = results.into_iter().flatten().collect();

        let params = if updates.is_empty() {
            global.params.clone()
        } else {
            aggregate(&global.params, &updates, mask.flags())?
        };
        let samples: u64 = updates.iter().map(|u| u.samples_processed).sum();
        let mean_loss = if samples > 0 {
            updates
                .iter()
                .map(|u| u.mean_loss * u.samples_processed as f64)
                .sum::<f64>()
                / samples as f64
        } else {
            0.0
        };
        let comm = round_comm(&mask, &self.counts, updates.len() as u64, c.transmit_frozen);
        let next = GlobalState {
            round: t + 1,
            params,
            initial_head: global.initial_head.clone(),
        };
        let eval_acc = if (t + 1).is_multiple_of(c.eval_every) || t + 1 == c.total_rounds {
            self.global_accuracy(&next.params)
        } else {
            None
        };
        let metrics = RoundMetrics {
            round: t,
            participants,
            skipped,
            mean_loss,
            eval_acc,
            flops: round_flops(&mask, &self.counts, samples),
            params_up: comm.up,
            params_down: comm.down,
        };
        Ok((next, metrics))
    }

    /// Fine-tunes every client from `global` and scores it locally.
    pub fn fine_tune_all(&self, global: &GlobalState) -> Vec<ClientResult> {
        let c = &self.config;
        let run = |shard: &ClientShard| {
            fine_tune(
                &self.arch,
                self.data,
                shard,
                &global.params,
                c.fine_tune_rounds,
                c.batch_size,
                c.learning_rate,
                c.seed,
            )
            .1
        };
        if c.parallel {
            self.shards.par_iter().map(run).collect()
        } else {
            self.shards.iter().map(run).collect()
        }
    }

    /// All rounds, then fine-tuning. `on_round` sees each round's metrics
    /// as soon as the round completes.
    pub fn run(&self, mut on_round: impl FnMut(&RoundMetrics) -> Result<()>) -> Result<RunReport> {
        let mut global = self.init_global();
        let mut rounds = Vec::with_capacity(self.config.total_rounds as usize);
        for _ in 0..self.config.total_rounds {
            let (next, metrics) = self.run_round(&global)?;
            if self.config.plan.mode != Mode::FedAvg {
                debug_assert!(next.head_unchanged());
            }
            on_round(&metrics)?;
            rounds.push(metrics);
            global = next;
        }
        let pre_finetune = self.global_accuracy(&global.params);
        let clients = self.fine_tune_all(&global);
        let summary = RunSummary::new(
            self.config.clone(),
            &rounds,
            &clients,
            pre_finetune,
            self.empty_clients.clone(),
            self.warnings.clone(),
        );
        Ok(RunReport {
            rounds,
            clients,
            summary,
            final_global: global,
        })
    }
}

/// Loads the configured dataset and runs the whole experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    let data = config.dataset.load(config.seed, config.max_examples)?;
    Federation::new(config.clone(), &data)?.run(|_| Ok(()))
}
