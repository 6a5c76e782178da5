//! Federated orchestration: sampling, scheduled local training, base-only
//! aggregation and per-client fine-tuning.

mod client;
mod config;
mod server;
mod sim;

pub use client::{
    accuracy, count_correct, fine_tune, local_masks, local_update, ClientResult, LocalUpdate,
};
pub use config::{DatasetSource, ExperimentConfig, ModelChoice};
pub use server::{aggregate, aggregation_weights, sample_clients};
pub use sim::{run_experiment, Federation, GlobalState, RunReport};
