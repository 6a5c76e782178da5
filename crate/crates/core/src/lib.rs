//! Deterministic federated-learning simulator with layer-wise unfreeze
//! scheduling.
//!
//! The model is split into base layers, aggregated by the server, and a
//! head kept frozen at its initialization during federated rounds and
//! personalized afterwards. Base layers become trainable progressively
//! according to a [`schedule::SchedulePlan`]:
//!
//! * **Vanilla** unfreezes from the input side towards the head,
//! * **Anti** unfreezes from the head side towards the input,
//!
//! with **FedBABU** (all base layers, head learning rate zero) and
//! **FedAvg** (everything trained and aggregated) as baselines.
//! [`cost`] accounts training FLOPs and communicated parameters
//! analytically.

pub mod cli;
pub mod config;
pub mod cost;
pub mod data;
pub mod error;
pub mod fedsim;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod schedule;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
